//! IPv4 address primitives shared across the crate: socket addresses,
//! host:port endpoints, and CIDR blocks with prefix-match queries.

use std::fmt;
use std::net::{Ipv4Addr, SocketAddrV4};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddrError {
    #[error("malformed address `{0}`: expected <ipv4>:<port>")]
    MalformedAddress(String),
    #[error("malformed endpoint `{0}`: expected <host>:<port>")]
    MalformedEndpoint(String),
    #[error("malformed CIDR `{0}`: expected <ipv4>/<prefix>")]
    MalformedCidr(String),
    #[error("prefix length {0} out of range (0..=32)")]
    PrefixOutOfRange(u32),
}

/// A concrete `ip:port` pair used for binding, advertising, and message
/// destinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address(SocketAddrV4);

impl Address {
    pub fn new(ip: Ipv4Addr, port: u16) -> Self {
        Self(SocketAddrV4::new(ip, port))
    }

    pub fn ip(&self) -> Ipv4Addr {
        *self.0.ip()
    }

    pub fn port(&self) -> u16 {
        self.0.port()
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Address {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<SocketAddrV4>()
            .map(Address)
            .map_err(|_| AddrError::MalformedAddress(s.to_string()))
    }
}

impl Serialize for Address {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A `host:port` pair as it appears in VPN peer configuration. The host is
/// kept as text so that names as well as literal IPs round-trip unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub host: String,
    pub port: u16,
}

impl Endpoint {
    pub fn new(host: impl Into<String>, port: u16) -> Self {
        Self {
            host: host.into(),
            port,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.host, self.port)
    }
}

impl FromStr for Endpoint {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (host, port) = s
            .rsplit_once(':')
            .ok_or_else(|| AddrError::MalformedEndpoint(s.to_string()))?;
        if host.is_empty() {
            return Err(AddrError::MalformedEndpoint(s.to_string()));
        }
        let port = port
            .parse()
            .map_err(|_| AddrError::MalformedEndpoint(s.to_string()))?;
        Ok(Self::new(host, port))
    }
}

/// An IPv4 CIDR block. Host bits below the prefix are preserved, so an
/// interface-style address like `192.0.0.5/24` keeps the `.5` while still
/// answering containment queries against the masked network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cidr {
    addr: Ipv4Addr,
    prefix: u8,
}

impl Cidr {
    pub fn new(addr: Ipv4Addr, prefix: u8) -> Result<Self, AddrError> {
        if prefix > 32 {
            return Err(AddrError::PrefixOutOfRange(u32::from(prefix)));
        }
        Ok(Self { addr, prefix })
    }

    /// The literal address as written, host bits included.
    pub fn addr(&self) -> Ipv4Addr {
        self.addr
    }

    pub fn prefix(&self) -> u8 {
        self.prefix
    }

    fn mask(&self) -> u32 {
        if self.prefix == 0 {
            0
        } else {
            u32::MAX << (32 - u32::from(self.prefix))
        }
    }

    /// The masked network base address.
    pub fn network(&self) -> Ipv4Addr {
        Ipv4Addr::from(u32::from(self.addr) & self.mask())
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        u32::from(ip) & self.mask() == u32::from(self.addr) & self.mask()
    }

    /// True when `other` is fully inside this block.
    pub fn contains_cidr(&self, other: &Cidr) -> bool {
        other.prefix >= self.prefix && self.contains(other.network())
    }

    pub fn overlaps(&self, other: &Cidr) -> bool {
        self.contains_cidr(other) || other.contains_cidr(self)
    }

    /// Number of allocatable host addresses, excluding the network and
    /// broadcast addresses of the block.
    pub fn host_count(&self) -> u32 {
        match self.prefix {
            32 => 1,
            31 => 2,
            p => (1u32 << (32 - u32::from(p))) - 2,
        }
    }

    /// The `n`-th host address of the block, 1-based (so `.1` is `host(1)`).
    /// /31 and /32 blocks have no network/broadcast reservation, so their
    /// first host is the network address itself.
    pub fn host(&self, n: u32) -> Option<Ipv4Addr> {
        if n == 0 || n > self.host_count() {
            return None;
        }
        let offset = if self.prefix >= 31 { n - 1 } else { n };
        Some(Ipv4Addr::from(u32::from(self.network()) + offset))
    }

    /// The `index`-th sub-block of width `sub_prefix`, e.g. splitting a /16
    /// into per-node /24 slices.
    pub fn subnet(&self, index: u32, sub_prefix: u8) -> Result<Self, AddrError> {
        if sub_prefix > 32 || sub_prefix < self.prefix {
            return Err(AddrError::PrefixOutOfRange(u32::from(sub_prefix)));
        }
        let slots = 1u32 << (sub_prefix - self.prefix);
        if index >= slots {
            return Err(AddrError::MalformedCidr(format!(
                "{}/{} has no subnet #{index} of width /{sub_prefix}",
                self.network(),
                self.prefix
            )));
        }
        let step = 1u32 << (32 - u32::from(sub_prefix));
        Cidr::new(
            Ipv4Addr::from(u32::from(self.network()) + index * step),
            sub_prefix,
        )
    }
}

impl fmt::Display for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.prefix)
    }
}

impl FromStr for Cidr {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (ip, prefix) = s
            .split_once('/')
            .ok_or_else(|| AddrError::MalformedCidr(s.to_string()))?;
        let addr: Ipv4Addr = ip
            .trim()
            .parse()
            .map_err(|_| AddrError::MalformedCidr(s.to_string()))?;
        let prefix: u8 = prefix
            .trim()
            .parse()
            .map_err(|_| AddrError::MalformedCidr(s.to_string()))?;
        Cidr::new(addr, prefix).map_err(|_| AddrError::MalformedCidr(s.to_string()))
    }
}

impl Serialize for Cidr {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cidr {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn address_roundtrip() {
        let a: Address = "192.0.0.1:5001".parse().expect("valid address");
        assert_eq!(a.ip(), Ipv4Addr::new(192, 0, 0, 1));
        assert_eq!(a.port(), 5001);
        assert_eq!(a.to_string(), "192.0.0.1:5001");
    }

    #[test]
    fn address_rejects_garbage() {
        assert!("192.0.0.1".parse::<Address>().is_err());
        assert!("not-an-ip:12".parse::<Address>().is_err());
        assert!("192.0.0.1:999999".parse::<Address>().is_err());
    }

    #[test]
    fn endpoint_parse_display() {
        let e: Endpoint = "45.113.235.156:4999".parse().expect("valid endpoint");
        assert_eq!(e.host, "45.113.235.156");
        assert_eq!(e.port, 4999);
        assert_eq!(e.to_string(), "45.113.235.156:4999");
        assert!("nohost".parse::<Endpoint>().is_err());
        assert!(":4999".parse::<Endpoint>().is_err());
    }

    #[test]
    fn cidr_preserves_host_bits() {
        let c: Cidr = "192.0.0.5/24".parse().expect("valid cidr");
        assert_eq!(c.addr(), Ipv4Addr::new(192, 0, 0, 5));
        assert_eq!(c.network(), Ipv4Addr::new(192, 0, 0, 0));
        assert_eq!(c.to_string(), "192.0.0.5/24");
    }

    #[test]
    fn cidr_containment() {
        let c: Cidr = "10.42.0.0/16".parse().expect("valid cidr");
        assert!(c.contains(Ipv4Addr::new(10, 42, 3, 9)));
        assert!(!c.contains(Ipv4Addr::new(10, 43, 0, 1)));
        let sub: Cidr = "10.42.1.0/24".parse().expect("valid cidr");
        assert!(c.contains_cidr(&sub));
        assert!(!sub.contains_cidr(&c));
        assert!(c.overlaps(&sub));
        let other: Cidr = "10.43.0.0/24".parse().expect("valid cidr");
        assert!(!c.overlaps(&other));
    }

    #[test]
    fn cidr_rejects_out_of_range_octet() {
        assert!("300.0.0.1/32".parse::<Cidr>().is_err());
        assert!("10.0.0.0/33".parse::<Cidr>().is_err());
        assert!("10.0.0.0".parse::<Cidr>().is_err());
    }

    #[test]
    fn cidr_host_enumeration() {
        let c: Cidr = "10.42.1.0/24".parse().expect("valid cidr");
        assert_eq!(c.host_count(), 254);
        assert_eq!(c.host(1), Some(Ipv4Addr::new(10, 42, 1, 1)));
        assert_eq!(c.host(254), Some(Ipv4Addr::new(10, 42, 1, 254)));
        assert_eq!(c.host(0), None);
        assert_eq!(c.host(255), None);
        let single: Cidr = "10.0.0.7/32".parse().expect("valid cidr");
        assert_eq!(single.host_count(), 1);
        assert_eq!(single.host(1), Some(Ipv4Addr::new(10, 0, 0, 7)));
    }

    #[test]
    fn cidr_subnet_split() {
        let pod: Cidr = "10.42.0.0/16".parse().expect("valid cidr");
        assert_eq!(
            pod.subnet(0, 24).expect("subnet").to_string(),
            "10.42.0.0/24"
        );
        assert_eq!(
            pod.subnet(4, 24).expect("subnet").to_string(),
            "10.42.4.0/24"
        );
        assert!(pod.subnet(256, 24).is_err());
        assert!(pod.subnet(0, 8).is_err());
    }

    #[test]
    fn cidr_zero_prefix_contains_everything() {
        let all: Cidr = "0.0.0.0/0".parse().expect("valid cidr");
        assert!(all.contains(Ipv4Addr::new(255, 255, 255, 255)));
        assert!(all.contains(Ipv4Addr::new(0, 0, 0, 0)));
    }
}
