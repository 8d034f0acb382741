//! End-to-end experiment driver: load the topology and manifests, build
//! the overlay, cluster, and simulator, deploy the framework components
//! under an addressing strategy, run repeated submissions, and report
//! per-run response times with summary statistics and CSV output.

pub mod config;
pub mod harness;
pub mod report;

pub use config::{default_inputs, ExperimentConfig, StrategyChoice};
pub use harness::{ComponentRole, Experiment, RunOutcome};
pub use report::{
    compare_strategies, latencies_from_csv, run_experiment, run_experiment_keep, BenchReport,
    Comparison, Sample, CSV_HEADER,
};

use thiserror::Error;

use crate::cluster::ClusterError;
use crate::manifest::ManifestError;
use crate::mesh::{MeshError, ValidationReport};
use crate::netsim::SimError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("mesh validation failed:\n{0}")]
    MeshInvalid(ValidationReport),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("deploy: {0}")]
    Deploy(String),
    #[error("comparison needs at least two configurations")]
    NeedTwoConfigs,
    #[error("configurations differ beyond strategy knobs: {0}")]
    UncontrolledComparison(String),
    #[error("csv: {0}")]
    Csv(String),
}
