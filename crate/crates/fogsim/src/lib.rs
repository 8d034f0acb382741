//! Desk-scale simulation of a hybrid cloud/edge deployment stack: a
//! full-mesh VPN overlay, a miniature container-orchestration control
//! plane, a five-component distributed task framework in the style of
//! FogBus2, three interchangeable pod-addressing strategies, and a
//! deterministic network simulator driving an end-to-end response-time
//! benchmark.
//!
//! Everything runs in-process on a virtual clock; no containers, tunnels,
//! or sockets are created.

pub mod addr;
pub mod addressing;
pub mod bench;
pub mod cluster;
pub mod fogbus;
pub mod manifest;
pub mod mesh;
pub mod netsim;
pub mod stats;

pub use addr::{Address, Cidr, Endpoint};
