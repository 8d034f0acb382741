//! Full-mesh P2P VPN overlay: node descriptions, per-node tunnel
//! configuration in the usual INI dialect, config generation for a full
//! mesh, longest-prefix route resolution over `AllowedIPs`, all-pairs
//! validation, and extension of the allowed ranges with per-node pod
//! subnets so cluster-internal addresses become routable across nodes.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{Cidr, Endpoint};

/// Keepalive written into every generated peer entry, in seconds.
pub const DEFAULT_KEEPALIVE_S: u32 = 15;

/// UDP listen port used when none is configured.
pub const DEFAULT_LISTEN_PORT: u16 = 4999;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeshError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate [Interface] section at line {0}")]
    DuplicateInterface(usize),
    #[error("missing [Interface] section")]
    MissingInterface,
    #[error("missing `{key}` in [{section}] section")]
    MissingField {
        section: &'static str,
        key: &'static str,
    },
    #[error("peer {0} has an empty AllowedIPs list")]
    EmptyAllowedIps(usize),
    #[error("malformed CIDR `{0}`")]
    MalformedCidr(String),
    #[error("route conflict: block {block} appears on more than one peer")]
    DuplicateRoute { block: Cidr },
    #[error("need at least two nodes to build a mesh, got {0}")]
    TooFewNodes(usize),
    #[error("duplicate private IP {0}")]
    DuplicatePrivateIp(Ipv4Addr),
    #[error("private IP {ip} of node `{tag}` lies outside the VPN subnet {cidr}")]
    PrivateIpOutsideVpn {
        tag: String,
        ip: Ipv4Addr,
        cidr: Cidr,
    },
    #[error("unknown node tag `{0}`")]
    UnknownNode(String),
    #[error("sub-CIDR {sub} for node `{tag}` is not inside {extra}")]
    SubCidrOutsideExtra { tag: String, sub: Cidr, extra: Cidr },
    #[error("sub-CIDRs {a} and {b} overlap")]
    OverlappingSubCidrs { a: Cidr, b: Cidr },
    #[error("extension range {extra} overlaps the VPN subnet {vpn}")]
    ExtraOverlapsVpn { extra: Cidr, vpn: Cidr },
    #[error("node `{node}` has no peer covering node `{owner}`")]
    NoPeerForOwner { node: String, owner: String },
    #[error("node table: {0}")]
    NodeTable(String),
}

/// Which tier of the hybrid environment a node lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Cloud,
    Edge,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layer::Cloud => write!(f, "cloud"),
            Layer::Edge => write!(f, "edge"),
        }
    }
}

/// One machine participating in the overlay.
///
/// Cloud nodes carry a publicly reachable endpoint; edge nodes typically sit
/// behind NAT and expose either a LAN endpoint or nothing at all.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    /// Short identifier, e.g. "A".
    pub tag: String,
    /// Node name as it appears in the cluster roster, e.g. "worker04".
    pub name: String,
    pub layer: Layer,
    pub public_endpoint: Option<Endpoint>,
    pub lan_endpoint: Option<Endpoint>,
    pub private_ip: Ipv4Addr,
    pub listen_port: u16,
}

/// One `[Peer]` block: who can be reached through this tunnel entry and at
/// which ranges. `allowed_ips` doubles as the routing table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerEntry {
    pub public_key: String,
    pub endpoint: Option<Endpoint>,
    pub allowed_ips: Vec<Cidr>,
    pub keepalive_s: Option<u32>,
}

/// The `[Interface]` block of a node config. `addresses` holds the VPN
/// address first; extending the mesh with locally owned ranges appends
/// further entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfaceConfig {
    pub private_key: String,
    pub addresses: Vec<Cidr>,
    pub listen_port: u16,
}

/// A complete per-node tunnel configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMeshConfig {
    pub interface: InterfaceConfig,
    pub peers: Vec<PeerEntry>,
}

impl NodeMeshConfig {
    /// Builds a config after checking the structural invariants: at least
    /// one interface address, non-empty `AllowedIPs` per peer, and no block
    /// claimed by two different peers (an equal-length prefix tie could not
    /// be resolved deterministically, so it is rejected here).
    pub fn new(interface: InterfaceConfig, peers: Vec<PeerEntry>) -> Result<Self, MeshError> {
        if interface.addresses.is_empty() {
            return Err(MeshError::MissingField {
                section: "Interface",
                key: "Address",
            });
        }
        for (i, peer) in peers.iter().enumerate() {
            if peer.allowed_ips.is_empty() {
                return Err(MeshError::EmptyAllowedIps(i));
            }
        }
        let cfg = Self { interface, peers };
        cfg.check_route_uniqueness()?;
        Ok(cfg)
    }

    /// The node's own VPN address.
    pub fn primary_ip(&self) -> Ipv4Addr {
        self.interface.addresses[0].addr()
    }

    pub fn check_route_uniqueness(&self) -> Result<(), MeshError> {
        for (i, a) in self.peers.iter().enumerate() {
            for b in self.peers.iter().skip(i + 1) {
                for block_a in &a.allowed_ips {
                    for block_b in &b.allowed_ips {
                        if block_a.network() == block_b.network()
                            && block_a.prefix() == block_b.prefix()
                        {
                            return Err(MeshError::DuplicateRoute { block: *block_a });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Where a destination address is reachable from a given node config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RouteDecision {
    /// Covered by the interface's own addresses (the node itself or its
    /// on-link ranges).
    Local,
    /// Forwarded through the peer at `peer_index`.
    Via {
        peer_index: usize,
        public_key: String,
        endpoint: Option<Endpoint>,
    },
    Unroutable,
}

impl RouteDecision {
    pub fn is_unroutable(&self) -> bool {
        matches!(self, RouteDecision::Unroutable)
    }
}

/// Longest-prefix match of `dst` over the interface addresses (local) and
/// every peer's `AllowedIPs`. No match means the overlay cannot carry the
/// packet.
///
/// An interface address written in host form (`192.0.0.5/24`) names the
/// node itself: only the exact address matches, since traffic to the rest
/// of its on-link block still needs a peer whose `AllowedIPs` covers it.
/// A network-form interface address (`10.42.0.0/24`, added when the mesh
/// is extended with locally owned ranges) matches its whole block. Equal
/// lengths tie in favour of the interface; peer ties cannot occur on
/// configs that passed construction.
pub fn resolve_route(cfg: &NodeMeshConfig, dst: Ipv4Addr) -> RouteDecision {
    let mut best_len: i32 = -1;
    let mut best: RouteDecision = RouteDecision::Unroutable;
    for block in &cfg.interface.addresses {
        let matched_len = if block.addr() == block.network() {
            block.contains(dst).then_some(i32::from(block.prefix()))
        } else {
            (dst == block.addr()).then_some(32)
        };
        if let Some(len) = matched_len {
            if len >= best_len {
                best_len = len;
                best = RouteDecision::Local;
            }
        }
    }
    for (i, peer) in cfg.peers.iter().enumerate() {
        for block in &peer.allowed_ips {
            if block.contains(dst) && i32::from(block.prefix()) > best_len {
                best_len = i32::from(block.prefix());
                best = RouteDecision::Via {
                    peer_index: i,
                    public_key: peer.public_key.clone(),
                    endpoint: peer.endpoint.clone(),
                };
            }
        }
    }
    best
}

/// Parses an INI-style tunnel config: exactly one `[Interface]` section,
/// any number of `[Peer]` sections, `Key = Value` lines, `#` comment lines.
/// Comments are discarded.
pub fn parse_mesh_config(text: &str) -> Result<NodeMeshConfig, MeshError> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Interface,
        Peer,
    }

    #[derive(Default)]
    struct PeerDraft {
        public_key: Option<String>,
        endpoint: Option<Endpoint>,
        allowed_ips: Vec<Cidr>,
        keepalive_s: Option<u32>,
    }

    let mut section = Section::None;
    let mut interface_seen = false;
    let mut private_key: Option<String> = None;
    let mut addresses: Vec<Cidr> = Vec::new();
    let mut listen_port: Option<u16> = None;
    let mut peers: Vec<PeerEntry> = Vec::new();
    let mut cur_peer: Option<PeerDraft> = None;

    fn finish_peer(peers: &mut Vec<PeerEntry>, peer: Option<PeerDraft>) -> Result<(), MeshError> {
        if let Some(draft) = peer {
            if draft.allowed_ips.is_empty() {
                return Err(MeshError::EmptyAllowedIps(peers.len()));
            }
            peers.push(PeerEntry {
                public_key: draft.public_key.ok_or(MeshError::MissingField {
                    section: "Peer",
                    key: "PublicKey",
                })?,
                endpoint: draft.endpoint,
                allowed_ips: draft.allowed_ips,
                keepalive_s: draft.keepalive_s,
            });
        }
        Ok(())
    }

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            match line {
                "[Interface]" => {
                    if interface_seen {
                        return Err(MeshError::DuplicateInterface(line_no));
                    }
                    interface_seen = true;
                    finish_peer(&mut peers, cur_peer.take())?;
                    section = Section::Interface;
                }
                "[Peer]" => {
                    finish_peer(&mut peers, cur_peer.take())?;
                    cur_peer = Some(PeerDraft::default());
                    section = Section::Peer;
                }
                other => {
                    return Err(MeshError::Parse {
                        line: line_no,
                        msg: format!("unknown section `{other}`"),
                    })
                }
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| MeshError::Parse {
            line: line_no,
            msg: format!("expected `Key = Value`, got `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        match section {
            Section::None => {
                return Err(MeshError::Parse {
                    line: line_no,
                    msg: format!("`{key}` appears before any section header"),
                })
            }
            Section::Interface => match key {
                "PrivateKey" => private_key = Some(value.to_string()),
                "Address" => {
                    for part in value.split(',') {
                        addresses.push(parse_cidr(part.trim())?);
                    }
                }
                "ListenPort" => {
                    listen_port = Some(value.parse().map_err(|_| MeshError::Parse {
                        line: line_no,
                        msg: format!("invalid ListenPort `{value}`"),
                    })?)
                }
                _ => {} // tolerated, e.g. DNS or MTU
            },
            Section::Peer => {
                let peer = cur_peer.as_mut().expect("peer section implies open peer");
                match key {
                    "PublicKey" => peer.public_key = Some(value.to_string()),
                    "Endpoint" => {
                        peer.endpoint =
                            Some(Endpoint::from_str(value).map_err(|_| MeshError::Parse {
                                line: line_no,
                                msg: format!("invalid Endpoint `{value}`"),
                            })?)
                    }
                    "AllowedIPs" => {
                        for part in value.split(',') {
                            peer.allowed_ips.push(parse_cidr(part.trim())?);
                        }
                    }
                    "PersistentKeepalive" => {
                        peer.keepalive_s = Some(value.parse().map_err(|_| MeshError::Parse {
                            line: line_no,
                            msg: format!("invalid PersistentKeepalive `{value}`"),
                        })?)
                    }
                    _ => {}
                }
            }
        }
    }
    finish_peer(&mut peers, cur_peer.take())?;

    if !interface_seen {
        return Err(MeshError::MissingInterface);
    }
    if addresses.is_empty() {
        return Err(MeshError::MissingField {
            section: "Interface",
            key: "Address",
        });
    }
    let interface = InterfaceConfig {
        private_key: private_key.ok_or(MeshError::MissingField {
            section: "Interface",
            key: "PrivateKey",
        })?,
        addresses,
        listen_port: listen_port.ok_or(MeshError::MissingField {
            section: "Interface",
            key: "ListenPort",
        })?,
    };
    NodeMeshConfig::new(interface, peers)
}

fn parse_cidr(s: &str) -> Result<Cidr, MeshError> {
    Cidr::from_str(s).map_err(|_| MeshError::MalformedCidr(s.to_string()))
}

/// Renders a config back to its text form: `[Interface]` first, then peers
/// in their stored order. `parse_mesh_config(render_mesh_config(c)) == c`.
pub fn render_mesh_config(cfg: &NodeMeshConfig) -> String {
    let mut out = String::new();
    out.push_str("[Interface]\n");
    out.push_str(&format!("PrivateKey = {}\n", cfg.interface.private_key));
    out.push_str(&format!(
        "Address = {}\n",
        join_cidrs(&cfg.interface.addresses)
    ));
    out.push_str(&format!("ListenPort = {}\n", cfg.interface.listen_port));
    for peer in &cfg.peers {
        out.push_str("\n[Peer]\n");
        out.push_str(&format!("PublicKey = {}\n", peer.public_key));
        if let Some(ep) = &peer.endpoint {
            out.push_str(&format!("Endpoint = {ep}\n"));
        }
        out.push_str(&format!("AllowedIPs = {}\n", join_cidrs(&peer.allowed_ips)));
        if let Some(k) = peer.keepalive_s {
            out.push_str(&format!("PersistentKeepalive = {k}\n"));
        }
    }
    out
}

fn join_cidrs(blocks: &[Cidr]) -> String {
    blocks
        .iter()
        .map(Cidr::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// The whole overlay: one tunnel config per node plus the VPN subnet they
/// share.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeshTopology {
    pub configs: BTreeMap<String, NodeMeshConfig>,
    pub vpn_cidr: Cidr,
}

/// Deterministic stand-in key material; the simulation carries keys as
/// opaque strings only.
pub fn derive_private_key(tag: &str) -> String {
    format!("sim-priv-{tag}")
}

pub fn derive_public_key(tag: &str) -> String {
    format!("sim-pub-{tag}")
}

/// Builds a full mesh: every node lists every other node as a peer with the
/// peer's `/32` VPN address in `AllowedIPs`. Peer endpoints prefer the
/// public endpoint, fall back to the LAN endpoint, and are omitted when the
/// peer has neither (NAT'd edge nodes reached via keepalive). Keepalive is
/// always emitted.
pub fn build_full_mesh(
    nodes: &[NodeSpec],
    vpn_cidr: Cidr,
    listen_port: u16,
) -> Result<MeshTopology, MeshError> {
    if nodes.len() < 2 {
        return Err(MeshError::TooFewNodes(nodes.len()));
    }
    for (i, node) in nodes.iter().enumerate() {
        if !vpn_cidr.contains(node.private_ip) {
            return Err(MeshError::PrivateIpOutsideVpn {
                tag: node.tag.clone(),
                ip: node.private_ip,
                cidr: vpn_cidr,
            });
        }
        if nodes[..i].iter().any(|n| n.private_ip == node.private_ip) {
            return Err(MeshError::DuplicatePrivateIp(node.private_ip));
        }
    }

    let mut configs = BTreeMap::new();
    for node in nodes {
        let interface = InterfaceConfig {
            private_key: derive_private_key(&node.tag),
            addresses: vec![Cidr::new(node.private_ip, vpn_cidr.prefix())
                .expect("vpn prefix validated by Cidr construction")],
            listen_port,
        };
        let peers = nodes
            .iter()
            .filter(|peer| peer.tag != node.tag)
            .map(|peer| PeerEntry {
                public_key: derive_public_key(&peer.tag),
                endpoint: peer
                    .public_endpoint
                    .clone()
                    .or_else(|| peer.lan_endpoint.clone()),
                allowed_ips: vec![Cidr::new(peer.private_ip, 32).expect("/32 is valid")],
                keepalive_s: Some(DEFAULT_KEEPALIVE_S),
            })
            .collect();
        configs.insert(node.tag.clone(), NodeMeshConfig::new(interface, peers)?);
    }
    Ok(MeshTopology { configs, vpn_cidr })
}

impl MeshTopology {
    /// The tag of the node a peer entry leads to, identified by the peer's
    /// `AllowedIPs` covering that node's own VPN address.
    pub fn peer_node(&self, from_tag: &str, peer_index: usize) -> Option<&str> {
        let peer = self.configs.get(from_tag)?.peers.get(peer_index)?;
        self.configs
            .iter()
            .filter(|(tag, _)| tag.as_str() != from_tag)
            .find(|(_, cfg)| {
                peer.allowed_ips
                    .iter()
                    .any(|block| block.contains(cfg.primary_ip()))
            })
            .map(|(tag, _)| tag.as_str())
    }
}

/// One defect discovered by [`validate_full_mesh`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    UnroutablePair {
        from: String,
        to: String,
        to_ip: Ipv4Addr,
    },
    AsymmetricPeer {
        covers: String,
        missing_reverse: String,
    },
    DuplicateRoute {
        node: String,
        block: Cidr,
    },
    AddressOutsideVpn {
        node: String,
        ip: Ipv4Addr,
    },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::UnroutablePair { from, to, to_ip } => {
                write!(f, "{from}->{to_ip} ({to}) unroutable")
            }
            Finding::AsymmetricPeer {
                covers,
                missing_reverse,
            } => write!(
                f,
                "peer asymmetry: {covers} covers {missing_reverse}, but {missing_reverse} does not cover {covers}"
            ),
            Finding::DuplicateRoute { node, block } => {
                write!(f, "route conflict on {node}: block {block} on multiple peers")
            }
            Finding::AddressOutsideVpn { node, ip } => {
                write!(f, "{node} address {ip} outside VPN subnet")
            }
        }
    }
}

/// Result of the all-pairs reachability scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub pair_count: usize,
    pub routable_pairs: usize,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}/{} pairs routable",
            self.routable_pairs, self.pair_count
        )?;
        for finding in &self.findings {
            writeln!(f, "finding: {finding}")?;
        }
        Ok(())
    }
}

/// Checks that every ordered node pair is routable, that peer coverage is
/// symmetric, that no node carries conflicting routes, and that every node
/// address lies inside the VPN subnet. Defects are reported as findings,
/// not errors.
pub fn validate_full_mesh(topology: &MeshTopology) -> ValidationReport {
    let mut findings = Vec::new();
    let mut pair_count = 0;
    let mut routable_pairs = 0;

    for (tag, cfg) in &topology.configs {
        if cfg.check_route_uniqueness().is_err() {
            for (i, a) in cfg.peers.iter().enumerate() {
                for b in cfg.peers.iter().skip(i + 1) {
                    for block in &a.allowed_ips {
                        if b.allowed_ips.iter().any(|other| {
                            other.network() == block.network() && other.prefix() == block.prefix()
                        }) {
                            findings.push(Finding::DuplicateRoute {
                                node: tag.clone(),
                                block: *block,
                            });
                        }
                    }
                }
            }
        }
        let ip = cfg.primary_ip();
        if !topology.vpn_cidr.contains(ip) {
            findings.push(Finding::AddressOutsideVpn {
                node: tag.clone(),
                ip,
            });
        }
    }

    let covers = |from: &NodeMeshConfig, ip: Ipv4Addr| {
        from.peers
            .iter()
            .any(|p| p.allowed_ips.iter().any(|b| b.contains(ip)))
    };

    for (from_tag, from_cfg) in &topology.configs {
        for (to_tag, to_cfg) in &topology.configs {
            if from_tag == to_tag {
                continue;
            }
            pair_count += 1;
            let to_ip = to_cfg.primary_ip();
            if resolve_route(from_cfg, to_ip).is_unroutable() {
                findings.push(Finding::UnroutablePair {
                    from: from_tag.clone(),
                    to: to_tag.clone(),
                    to_ip,
                });
            } else {
                routable_pairs += 1;
            }
            if covers(from_cfg, to_ip) && !covers(to_cfg, from_cfg.primary_ip()) {
                findings.push(Finding::AsymmetricPeer {
                    covers: from_tag.clone(),
                    missing_reverse: to_tag.clone(),
                });
            }
        }
    }

    ValidationReport {
        pair_count,
        routable_pairs,
        findings,
    }
}

/// Grants cross-node reachability for an extra address range (typically the
/// cluster pod CIDR): each node's peer entry toward an owner gains the
/// owner's sub-range in `AllowedIPs`, and the owner's own interface gains
/// the range as an on-link address. The original topology is untouched.
pub fn extend_allowed_ips(
    topology: &MeshTopology,
    extra_cidr: Cidr,
    owner_map: &BTreeMap<String, Cidr>,
) -> Result<MeshTopology, MeshError> {
    if extra_cidr.overlaps(&topology.vpn_cidr) {
        return Err(MeshError::ExtraOverlapsVpn {
            extra: extra_cidr,
            vpn: topology.vpn_cidr,
        });
    }
    let owners: Vec<(&String, &Cidr)> = owner_map.iter().collect();
    for (i, (tag, sub)) in owners.iter().enumerate() {
        if !topology.configs.contains_key(*tag) {
            return Err(MeshError::UnknownNode((*tag).clone()));
        }
        if !extra_cidr.contains_cidr(sub) {
            return Err(MeshError::SubCidrOutsideExtra {
                tag: (*tag).clone(),
                sub: **sub,
                extra: extra_cidr,
            });
        }
        for (_, other) in owners.iter().skip(i + 1) {
            if sub.overlaps(other) {
                return Err(MeshError::OverlappingSubCidrs {
                    a: **sub,
                    b: **other,
                });
            }
        }
    }

    let mut extended = topology.clone();
    for (owner_tag, sub) in owner_map {
        let owner_ip = extended.configs[owner_tag].primary_ip();
        for (tag, cfg) in extended.configs.iter_mut() {
            if tag == owner_tag {
                cfg.interface.addresses.push(*sub);
                continue;
            }
            let peer = cfg
                .peers
                .iter_mut()
                .find(|p| p.allowed_ips.iter().any(|b| b.contains(owner_ip)))
                .ok_or_else(|| MeshError::NoPeerForOwner {
                    node: tag.clone(),
                    owner: owner_tag.clone(),
                })?;
            peer.allowed_ips.push(*sub);
        }
    }
    for cfg in extended.configs.values() {
        cfg.check_route_uniqueness()?;
    }
    Ok(extended)
}

/// Parses the node table format: one node per line, whitespace-separated
/// columns `tag name layer public_endpoint lan_endpoint private_ip`, with
/// `-` marking an absent endpoint and `#` starting a comment line.
/// Endpoints may be given as `host` (the listen port is appended) or as
/// `host:port`.
pub fn parse_node_table(text: &str, listen_port: u16) -> Result<Vec<NodeSpec>, MeshError> {
    let mut nodes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(MeshError::NodeTable(format!(
                "line {}: expected 6 columns (tag name layer public_endpoint lan_endpoint private_ip), got {}",
                idx + 1,
                cols.len()
            )));
        }
        let layer = match cols[2] {
            "cloud" => Layer::Cloud,
            "edge" => Layer::Edge,
            other => {
                return Err(MeshError::NodeTable(format!(
                    "line {}: unknown layer `{other}`",
                    idx + 1
                )))
            }
        };
        let endpoint = |col: &str| -> Result<Option<Endpoint>, MeshError> {
            if col == "-" {
                return Ok(None);
            }
            let ep = if col.contains(':') {
                Endpoint::from_str(col)
                    .map_err(|e| MeshError::NodeTable(format!("line {}: {e}", idx + 1)))?
            } else {
                Endpoint::new(col, listen_port)
            };
            Ok(Some(ep))
        };
        nodes.push(NodeSpec {
            tag: cols[0].to_string(),
            name: cols[1].to_string(),
            layer,
            public_endpoint: endpoint(cols[3])?,
            lan_endpoint: endpoint(cols[4])?,
            private_ip: cols[5].parse().map_err(|_| {
                MeshError::NodeTable(format!("line {}: invalid IP `{}`", idx + 1, cols[5]))
            })?,
            listen_port,
        });
    }
    if nodes.is_empty() {
        return Err(MeshError::NodeTable("no nodes in table".to_string()));
    }
    Ok(nodes)
}

/// Renders one node's config with a banner and peer labels resolved from
/// the topology. Comment lines are dropped again on parse, so the result
/// stays round-trip-equal to [`render_mesh_config`] output.
pub fn render_node_config_labeled(
    topology: &MeshTopology,
    tag: &str,
    names: &BTreeMap<String, String>,
) -> Option<String> {
    let cfg = topology.configs.get(tag)?;
    let display = names.get(tag).cloned().unwrap_or_else(|| tag.to_string());
    let mut out = format!("# *** For {display} Only ***\n\n[Interface]\n");
    out.push_str(&format!("PrivateKey = {}\n", cfg.interface.private_key));
    out.push_str(&format!(
        "Address = {}\n",
        join_cidrs(&cfg.interface.addresses)
    ));
    out.push_str(&format!("ListenPort = {}\n", cfg.interface.listen_port));
    for (i, peer) in cfg.peers.iter().enumerate() {
        out.push_str("\n[Peer]\n");
        if let Some(peer_tag) = topology.peer_node(tag, i) {
            let label = names
                .get(peer_tag)
                .cloned()
                .unwrap_or_else(|| peer_tag.to_string());
            out.push_str(&format!("# {label}\n"));
        }
        out.push_str(&format!("PublicKey = {}\n", peer.public_key));
        if let Some(ep) = &peer.endpoint {
            out.push_str(&format!("Endpoint = {ep}\n"));
        }
        out.push_str(&format!("AllowedIPs = {}\n", join_cidrs(&peer.allowed_ips)));
        if let Some(k) = peer.keepalive_s {
            out.push_str(&format!("PersistentKeepalive = {k}\n"));
        }
    }
    Some(out)
}


#[cfg(test)]
pub(crate) use tests::{sample_nodes, vpn_cidr};

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn arb_cidr() -> impl Strategy<Value = Cidr> {
        (any::<u32>(), 8u8..=32).prop_map(|(addr, prefix)| {
            Cidr::new(std::net::Ipv4Addr::from(addr), prefix).expect("prefix in range")
        })
    }

    fn arb_key() -> impl Strategy<Value = String> {
        "[A-Za-z0-9+/]{8,44}"
    }

    fn arb_peer(block: Cidr) -> impl Strategy<Value = PeerEntry> {
        (
            arb_key(),
            proptest::option::of(("([0-9]{1,3}\\.){3}[0-9]{1,3}", 1u16..u16::MAX)),
            proptest::option::of(1u32..600),
        )
            .prop_map(move |(key, ep, keepalive)| PeerEntry {
                public_key: key,
                endpoint: ep.map(|(h, p)| Endpoint::new(h, p)),
                allowed_ips: vec![block],
                keepalive_s: keepalive,
            })
    }

    fn arb_config() -> impl Strategy<Value = NodeMeshConfig> {
        (arb_key(), arb_cidr(), 1u16..u16::MAX, 0usize..6).prop_flat_map(
            |(key, addr, port, n_peers)| {
                // one distinct /32 block per peer keeps routes unique
                let peers: Vec<_> = (0..n_peers)
                    .map(|i| {
                        let ip = std::net::Ipv4Addr::from(0x0a00_0000u32 + i as u32 + 1);
                        arb_peer(Cidr::new(ip, 32).expect("valid")).boxed()
                    })
                    .collect();
                (Just(key), Just(addr), Just(port), peers).prop_map(|(key, addr, port, peers)| {
                    NodeMeshConfig::new(
                        InterfaceConfig {
                            private_key: key,
                            addresses: vec![addr],
                            listen_port: port,
                        },
                        peers,
                    )
                    .expect("generated configs are valid")
                })
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn parse_render_roundtrip(cfg in arb_config()) {
            let rendered = render_mesh_config(&cfg);
            let parsed = parse_mesh_config(&rendered).expect("rendered configs parse");
            prop_assert_eq!(parsed, cfg);
        }

        #[test]
        fn resolved_route_has_maximal_prefix(cfg in arb_config(), dst in any::<u32>()) {
            let dst = std::net::Ipv4Addr::from(dst);
            // independent scan: collect every matching block, host-form
            // interface addresses matching exactly at /32
            let mut matches: Vec<(i32, Option<usize>)> = Vec::new();
            for block in &cfg.interface.addresses {
                if block.addr() == block.network() {
                    if block.contains(dst) {
                        matches.push((i32::from(block.prefix()), None));
                    }
                } else if dst == block.addr() {
                    matches.push((32, None));
                }
            }
            for (i, peer) in cfg.peers.iter().enumerate() {
                for block in &peer.allowed_ips {
                    if block.contains(dst) {
                        matches.push((i32::from(block.prefix()), Some(i)));
                    }
                }
            }
            let decision = resolve_route(&cfg, dst);
            prop_assert_eq!(&decision, &resolve_route(&cfg, dst), "route must be deterministic");
            match decision {
                RouteDecision::Unroutable => prop_assert!(matches.is_empty()),
                RouteDecision::Local => {
                    let max = matches.iter().map(|(l, _)| *l).max().expect("local implies a match");
                    prop_assert!(matches.iter().any(|(l, p)| *l == max && p.is_none()));
                }
                RouteDecision::Via { peer_index, .. } => {
                    let max = matches.iter().map(|(l, _)| *l).max().expect("via implies a match");
                    prop_assert!(matches.contains(&(max, Some(peer_index))));
                }
            }
        }

        #[test]
        fn full_mesh_all_pairs_routable(n in 2usize..=8) {
            let nodes: Vec<NodeSpec> = (0..n)
                .map(|i| NodeSpec {
                    tag: format!("N{i}"),
                    name: format!("node{i}"),
                    layer: if i % 2 == 0 { Layer::Cloud } else { Layer::Edge },
                    public_endpoint: if i % 2 == 0 {
                        Some(Endpoint::new(format!("198.51.100.{i}"), 4999))
                    } else {
                        None
                    },
                    lan_endpoint: None,
                    private_ip: std::net::Ipv4Addr::new(192, 0, 0, (i + 1) as u8),
                    listen_port: 4999,
                })
                .collect();
            let topo = build_full_mesh(&nodes, "192.0.0.0/24".parse().expect("cidr"), 4999)
                .expect("mesh builds");
            let report = validate_full_mesh(&topo);
            prop_assert!(report.ok());
            prop_assert_eq!(report.pair_count, n * (n - 1));
            prop_assert_eq!(report.routable_pairs, n * (n - 1));
        }

        #[test]
        fn solution2_partition_covers_extra_range(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let nodes = super::tests::sample_nodes();
            let topo = build_full_mesh(&nodes, super::tests::vpn_cidr(), 4999)
                .expect("mesh builds");
            let extra: Cidr = "10.42.0.0/16".parse().expect("cidr");
            // partition the /16 into four /18 slices over four owners
            let mut owner_map = BTreeMap::new();
            for (i, tag) in ["A", "B", "C", "D"].iter().enumerate() {
                owner_map.insert(tag.to_string(), extra.subnet(i as u32, 18).expect("subnet"));
            }
            let extended = extend_allowed_ips(&topo, extra, &owner_map).expect("extends");
            for _ in 0..32 {
                let offset: u32 = rng.gen_range(0..1 << 16);
                let dst = std::net::Ipv4Addr::from(u32::from(extra.network()) + offset);
                for cfg in extended.configs.values() {
                    prop_assert!(!resolve_route(cfg, dst).is_unroutable());
                }
            }
            // decisions for previously routable VPN addresses are unchanged
            for (tag, cfg) in &topo.configs {
                for other in topo.configs.values() {
                    let prev = resolve_route(cfg, other.primary_ip());
                    let now = resolve_route(&extended.configs[tag], other.primary_ip());
                    prop_assert_eq!(prev, now);
                }
            }
        }
    }
}
