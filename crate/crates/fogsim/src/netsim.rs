//! Deterministic simulated transport. Envelopes move between registered
//! endpoints according to the mesh overlay's routing tables and the
//! cluster's pod-network rules, with link latencies sampled from a seeded
//! model. Time is a virtual microsecond clock; deliveries are processed in
//! timestamp order with insertion-order tie-breaks, so identical seeds and
//! inputs replay identical traces.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::io::Write;
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{Address, Cidr};
use crate::fogbus::envelope::{Envelope, MessageKind};
use crate::mesh::{resolve_route, Layer, NodeMeshConfig, RouteDecision};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("address {0} is already registered")]
    AddressInUse(Address),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no endpoint registered at {0}")]
    UnknownEndpoint(Address),
    #[error("sender endpoint {0} is not registered")]
    SenderNotRegistered(Address),
    #[error("latency config: {0}")]
    LatencyConfig(String),
}

/// Coarse link classification used by the latency model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    SameNode,
    VpnCloudCloud,
    VpnCloudEdge,
}

/// One-way latency parameters. `cluster_overlay_extra_ms` models the
/// per-hop processing overhead of running inside the cluster network and
/// is skipped entirely in native (no-cluster) mode. Jitter is uniform on
/// `[-jitter_ms, +jitter_ms]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub same_node_ms: f64,
    pub vpn_cloud_cloud_ms: f64,
    pub vpn_cloud_edge_ms: f64,
    pub cluster_overlay_extra_ms: f64,
    pub jitter_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            same_node_ms: 1.0,
            vpn_cloud_cloud_ms: 6.0,
            vpn_cloud_edge_ms: 6.0,
            cluster_overlay_extra_ms: 2.0,
            jitter_ms: 0.4,
        }
    }
}

impl LatencyModel {
    pub fn base_ms(&self, class: LinkClass) -> f64 {
        match class {
            LinkClass::SameNode => self.same_node_ms,
            LinkClass::VpnCloudCloud => self.vpn_cloud_cloud_ms,
            LinkClass::VpnCloudEdge => self.vpn_cloud_edge_ms,
        }
    }

    /// Largest possible one-way latency under this model with the overlay
    /// overhead included; used to derive request timeouts.
    pub fn max_one_way_ms(&self) -> f64 {
        self.vpn_cloud_cloud_ms
            .max(self.vpn_cloud_edge_ms)
            .max(self.same_node_ms)
            + self.cluster_overlay_extra_ms
            + self.jitter_ms
    }

    /// Parses `key = value` text with `#` comments.
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut model = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SimError::LatencyConfig(format!("line {}: expected key = value", idx + 1))
            })?;
            let value: f64 = value.trim().parse().map_err(|_| {
                SimError::LatencyConfig(format!(
                    "line {}: invalid number `{}`",
                    idx + 1,
                    value.trim()
                ))
            })?;
            if value < 0.0 {
                return Err(SimError::LatencyConfig(format!(
                    "line {}: negative latency",
                    idx + 1
                )));
            }
            match key.trim() {
                "same_node_ms" => model.same_node_ms = value,
                "vpn_cloud_cloud_ms" => model.vpn_cloud_cloud_ms = value,
                "vpn_cloud_edge_ms" => model.vpn_cloud_edge_ms = value,
                "cluster_overlay_extra_ms" => model.cluster_overlay_extra_ms = value,
                "jitter_ms" => model.jitter_ms = value,
                other => {
                    return Err(SimError::LatencyConfig(format!(
                        "line {}: unknown key `{other}`",
                        idx + 1
                    )))
                }
            }
        }
        Ok(model)
    }
}

/// Why a send did not reach its destination handler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    /// No overlay route covers the destination address.
    Unroutable,
    /// The address is reachable but nothing is listening there.
    EndpointDown,
    /// The endpoint disappeared while the envelope was in flight.
    Dropped,
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailureReason::Unroutable => write!(f, "unroutable"),
            FailureReason::EndpointDown => write!(f, "endpoint_down"),
            FailureReason::Dropped => write!(f, "dropped"),
        }
    }
}

/// Synchronous outcome of a send: either scheduled for delivery after the
/// sampled latency, or failed with a reason. `delivered` implies a positive
/// latency and no failure reason.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryResult {
    pub delivered: bool,
    pub latency_ms: Option<f64>,
    pub failure_reason: Option<FailureReason>,
}

impl DeliveryResult {
    fn scheduled(latency_us: u64) -> Self {
        Self {
            delivered: true,
            latency_ms: Some(latency_us as f64 / 1000.0),
            failure_reason: None,
        }
    }

    fn failed(reason: FailureReason) -> Self {
        Self {
            delivered: false,
            latency_ms: None,
            failure_reason: Some(reason),
        }
    }
}

/// Per-node network identity: tier, VPN address, and (in pod-network mode)
/// the pod subnet owned by the node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeProfile {
    pub layer: Layer,
    pub vpn_ip: Ipv4Addr,
    pub pod_subnet: Option<Cidr>,
}

/// Terminal outcome of one send attempt in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceOutcome {
    Delivered,
    Failed(FailureReason),
}

/// One hop-level record: every send attempt produces exactly one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Monotonic per-send sequence number (send order).
    pub env_seq: u64,
    pub request_id: u64,
    pub kind: MessageKind,
    pub from: Address,
    pub from_node: String,
    pub to: Address,
    pub to_node: Option<String>,
    /// The sender's advertised reply address carried by the envelope.
    pub reply_to: Address,
    pub sent_at_us: u64,
    pub completed_at_us: u64,
    pub latency_us: Option<u64>,
    pub link: Option<LinkClass>,
    pub hops: u32,
    pub outcome: TraceOutcome,
}

/// Sink for outbound envelopes produced while a handler runs. The proxy is
/// the only component that forwards via the destination's owning node.
pub struct Ctx<'a> {
    now_us: u64,
    self_addr: Address,
    outbox: &'a mut Vec<Outgoing>,
}

#[derive(Debug)]
pub(crate) struct Outgoing {
    env: Envelope,
    via_owner_node: bool,
}

impl Ctx<'_> {
    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    pub fn now_ms(&self) -> f64 {
        self.now_us as f64 / 1000.0
    }

    pub fn self_addr(&self) -> Address {
        self.self_addr
    }

    /// Queues an envelope for normal address-based routing.
    pub fn send(&mut self, env: Envelope) {
        self.outbox.push(Outgoing {
            env,
            via_owner_node: false,
        });
    }

    /// Queues an envelope to be carried over the node network to the node
    /// owning the destination endpoint, then delivered locally. This is the
    /// proxy's routing-policy path; pod addresses stay opaque to the VPN.
    pub fn send_via_owner_node(&mut self, env: Envelope) {
        self.outbox.push(Outgoing {
            env,
            via_owner_node: true,
        });
    }
}

/// A message-handling component instance bound to one endpoint.
pub trait Component {
    fn name(&self) -> &str;
    fn handle(&mut self, env: Envelope, ctx: &mut Ctx<'_>);
}

struct RegisteredEndpoint {
    node: String,
    pod_uid: Option<u64>,
    handler: Option<Box<dyn Component>>,
}

/// Info returned when an endpoint is torn down.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailedEndpoint {
    pub address: Address,
    pub node: String,
    pub pod_uid: Option<u64>,
}

struct QueuedDelivery {
    at_us: u64,
    seq: u64,
    env: Envelope,
    to: Address,
    record: PendingRecord,
}

struct PendingRecord {
    env_seq: u64,
    request_id: u64,
    kind: MessageKind,
    from: Address,
    from_node: String,
    to_node: Option<String>,
    reply_to: Address,
    sent_at_us: u64,
    link: LinkClass,
    hops: u32,
}

impl PartialEq for QueuedDelivery {
    fn eq(&self, other: &Self) -> bool {
        self.at_us == other.at_us && self.seq == other.seq
    }
}
impl Eq for QueuedDelivery {}
impl PartialOrd for QueuedDelivery {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedDelivery {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at_us, self.seq).cmp(&(other.at_us, other.seq))
    }
}

/// The simulator: virtual clock, endpoint registry, routing state, latency
/// model, and the delivery queue. All handler execution happens on this
/// single logical event loop.
pub struct Simulation {
    clock_us: u64,
    queue: BinaryHeap<Reverse<QueuedDelivery>>,
    endpoints: HashMap<Address, RegisteredEndpoint>,
    profiles: BTreeMap<String, NodeProfile>,
    mesh: BTreeMap<String, NodeMeshConfig>,
    latency: LatencyModel,
    overlay_enabled: bool,
    rng: ChaCha8Rng,
    pair_fifo: HashMap<(Address, Address), u64>,
    trace: Vec<TraceRecord>,
    next_seq: u64,
    sends_attempted: u64,
    wall_clock: bool,
}

impl Simulation {
    pub fn new(
        profiles: BTreeMap<String, NodeProfile>,
        mesh: BTreeMap<String, NodeMeshConfig>,
        latency: LatencyModel,
        overlay_enabled: bool,
        seed: u64,
    ) -> Self {
        Self {
            clock_us: 0,
            queue: BinaryHeap::new(),
            endpoints: HashMap::new(),
            profiles,
            mesh,
            latency,
            overlay_enabled,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pair_fifo: HashMap::new(),
            trace: Vec::new(),
            next_seq: 0,
            sends_attempted: 0,
            wall_clock: false,
        }
    }

    /// Replaces the routing tables, e.g. after extending allowed ranges.
    pub fn set_mesh(&mut self, mesh: BTreeMap<String, NodeMeshConfig>) {
        self.mesh = mesh;
    }

    /// When enabled, `run_until_idle` paces deliveries against the real
    /// clock for demonstration runs. Virtual time stays authoritative.
    pub fn set_wall_clock(&mut self, enabled: bool) {
        self.wall_clock = enabled;
    }

    pub fn now_us(&self) -> u64 {
        self.clock_us
    }

    pub fn now_ms(&self) -> f64 {
        self.clock_us as f64 / 1000.0
    }

    pub fn latency_model(&self) -> &LatencyModel {
        &self.latency
    }

    pub fn overlay_enabled(&self) -> bool {
        self.overlay_enabled
    }

    pub fn register_endpoint(
        &mut self,
        address: Address,
        node: &str,
        pod_uid: Option<u64>,
        handler: Box<dyn Component>,
    ) -> Result<(), SimError> {
        if !self.profiles.contains_key(node) {
            return Err(SimError::UnknownNode(node.to_string()));
        }
        if self.endpoints.contains_key(&address) {
            return Err(SimError::AddressInUse(address));
        }
        self.endpoints.insert(
            address,
            RegisteredEndpoint {
                node: node.to_string(),
                pod_uid,
                handler: Some(handler),
            },
        );
        Ok(())
    }

    /// Tears an endpoint down. In-flight envelopes to it are dropped when
    /// their delivery time comes; subsequent sends fail with
    /// `endpoint_down` until something re-registers at the address.
    pub fn fail_endpoint(&mut self, address: Address) -> Result<FailedEndpoint, SimError> {
        let ep = self
            .endpoints
            .remove(&address)
            .ok_or(SimError::UnknownEndpoint(address))?;
        Ok(FailedEndpoint {
            address,
            node: ep.node,
            pod_uid: ep.pod_uid,
        })
    }

    pub fn endpoint_node(&self, address: &Address) -> Option<&str> {
        self.endpoints.get(address).map(|e| e.node.as_str())
    }

    pub fn is_registered(&self, address: &Address) -> bool {
        self.endpoints.contains_key(address)
    }

    /// Sends an envelope from a registered endpoint through normal
    /// address-based routing.
    pub fn send_from(
        &mut self,
        sender: Address,
        env: Envelope,
    ) -> Result<DeliveryResult, SimError> {
        let from_node = self
            .endpoints
            .get(&sender)
            .ok_or(SimError::SenderNotRegistered(sender))?
            .node
            .clone();
        Ok(self.dispatch(sender, &from_node, env, false))
    }

    /// Routability probe used for validation: where would a packet from
    /// `from_node` to `dst` transit, without sending anything.
    pub fn probe_route(
        &self,
        from_node: &str,
        dst: Ipv4Addr,
    ) -> Result<(Option<String>, LinkClass), FailureReason> {
        self.route_address(from_node, dst)
    }

    fn link_class(&self, from_node: &str, to_node: &str) -> LinkClass {
        if from_node == to_node {
            return LinkClass::SameNode;
        }
        let from = self.profiles[from_node].layer;
        let to = self.profiles[to_node].layer;
        match (from, to) {
            (Layer::Cloud, Layer::Cloud) => LinkClass::VpnCloudCloud,
            _ => LinkClass::VpnCloudEdge,
        }
    }

    fn route_address(
        &self,
        from_node: &str,
        dst: Ipv4Addr,
    ) -> Result<(Option<String>, LinkClass), FailureReason> {
        let profile = &self.profiles[from_node];
        if dst == profile.vpn_ip || profile.pod_subnet.as_ref().is_some_and(|s| s.contains(dst)) {
            return Ok((Some(from_node.to_string()), LinkClass::SameNode));
        }
        let cfg = match self.mesh.get(from_node) {
            Some(cfg) => cfg,
            None => return Err(FailureReason::Unroutable),
        };
        match resolve_route(cfg, dst) {
            RouteDecision::Local => {
                // on-link address that is not a known node: deliverable in
                // principle, nothing may be listening
                let owner = self
                    .profiles
                    .iter()
                    .find(|(_, p)| p.vpn_ip == dst)
                    .map(|(tag, _)| tag.clone());
                let class = owner
                    .as_deref()
                    .map_or(LinkClass::SameNode, |t| self.link_class(from_node, t));
                Ok((owner, class))
            }
            RouteDecision::Via { peer_index, .. } => {
                let peer = &cfg.peers[peer_index];
                let owner = self
                    .profiles
                    .iter()
                    .filter(|(tag, _)| tag.as_str() != from_node)
                    .find(|(_, p)| peer.allowed_ips.iter().any(|b| b.contains(p.vpn_ip)))
                    .map(|(tag, _)| tag.clone());
                let class = match owner.as_deref() {
                    Some(t) => self.link_class(from_node, t),
                    None => LinkClass::VpnCloudEdge,
                };
                Ok((owner, class))
            }
            RouteDecision::Unroutable => Err(FailureReason::Unroutable),
        }
    }

    fn route_via_node(
        &self,
        from_node: &str,
        to_node: &str,
    ) -> Result<(Option<String>, LinkClass), FailureReason> {
        if from_node == to_node {
            return Ok((Some(to_node.to_string()), LinkClass::SameNode));
        }
        let cfg = match self.mesh.get(from_node) {
            Some(cfg) => cfg,
            None => return Err(FailureReason::Unroutable),
        };
        let to_ip = self.profiles[to_node].vpn_ip;
        if resolve_route(cfg, to_ip).is_unroutable() {
            return Err(FailureReason::Unroutable);
        }
        Ok((
            Some(to_node.to_string()),
            self.link_class(from_node, to_node),
        ))
    }

    fn sample_latency_us(&mut self, class: LinkClass) -> u64 {
        let base = self.latency.base_ms(class);
        let extra = if self.overlay_enabled {
            self.latency.cluster_overlay_extra_ms
        } else {
            0.0
        };
        let jitter_half_us = (self.latency.jitter_ms * 1000.0).round() as i64;
        let jitter_us = self.rng.gen_range(-jitter_half_us..=jitter_half_us);
        let total = ((base + extra) * 1000.0).round() as i64 + jitter_us;
        total.max(1) as u64
    }

    fn dispatch(
        &mut self,
        from_addr: Address,
        from_node: &str,
        env: Envelope,
        via_owner_node: bool,
    ) -> DeliveryResult {
        let env_seq = self.next_seq;
        self.next_seq += 1;
        self.sends_attempted += 1;

        let fail = |sim: &mut Self, to_node: Option<String>, link, reason| {
            sim.trace.push(TraceRecord {
                env_seq,
                request_id: env.request_id,
                kind: env.kind,
                from: from_addr,
                from_node: from_node.to_string(),
                to: env.dest,
                to_node,
                reply_to: env.reply_to,
                sent_at_us: sim.clock_us,
                completed_at_us: sim.clock_us,
                latency_us: None,
                link,
                hops: env.hops,
                outcome: TraceOutcome::Failed(reason),
            });
            DeliveryResult::failed(reason)
        };

        let routed = if via_owner_node {
            match self.endpoints.get(&env.dest) {
                Some(ep) => {
                    let node = ep.node.clone();
                    self.route_via_node(from_node, &node)
                }
                None => return fail(self, None, None, FailureReason::EndpointDown),
            }
        } else {
            self.route_address(from_node, env.dest.ip())
        };

        let (to_node, link) = match routed {
            Ok(r) => r,
            Err(reason) => return fail(self, None, None, reason),
        };
        if !self.endpoints.contains_key(&env.dest) {
            return fail(self, to_node, Some(link), FailureReason::EndpointDown);
        }

        let latency_us = self.sample_latency_us(link);
        let mut at_us = self.clock_us + latency_us;
        // per-pair FIFO: a later send between the same two endpoints never
        // overtakes an earlier one
        let pair = (from_addr, env.dest);
        if let Some(&last) = self.pair_fifo.get(&pair) {
            at_us = at_us.max(last);
        }
        self.pair_fifo.insert(pair, at_us);
        let effective_latency = at_us - self.clock_us;

        let record = PendingRecord {
            env_seq,
            request_id: env.request_id,
            kind: env.kind,
            from: from_addr,
            from_node: from_node.to_string(),
            to_node,
            reply_to: env.reply_to,
            sent_at_us: self.clock_us,
            link,
            hops: env.hops,
        };
        let to = env.dest;
        self.queue.push(Reverse(QueuedDelivery {
            at_us,
            seq: env_seq,
            env,
            to,
            record,
        }));
        DeliveryResult::scheduled(effective_latency)
    }

    /// Processes scheduled deliveries in timestamp order (ties in send
    /// order) until the queue is empty.
    pub fn run_until_idle(&mut self) {
        while let Some(Reverse(delivery)) = self.queue.pop() {
            if self.wall_clock && delivery.at_us > self.clock_us {
                std::thread::sleep(std::time::Duration::from_micros(
                    delivery.at_us - self.clock_us,
                ));
            }
            self.clock_us = self.clock_us.max(delivery.at_us);
            let QueuedDelivery {
                at_us,
                env,
                to,
                record,
                ..
            } = delivery;

            let Some(endpoint) = self.endpoints.get_mut(&to) else {
                self.trace.push(TraceRecord {
                    env_seq: record.env_seq,
                    request_id: record.request_id,
                    kind: record.kind,
                    from: record.from,
                    from_node: record.from_node,
                    to,
                    to_node: record.to_node,
                    reply_to: record.reply_to,
                    sent_at_us: record.sent_at_us,
                    completed_at_us: at_us,
                    latency_us: None,
                    link: Some(record.link),
                    hops: record.hops,
                    outcome: TraceOutcome::Failed(FailureReason::Dropped),
                });
                continue;
            };

            let mut handler = endpoint
                .handler
                .take()
                .expect("handler present outside of dispatch");
            let handler_node = endpoint.node.clone();
            self.trace.push(TraceRecord {
                env_seq: record.env_seq,
                request_id: record.request_id,
                kind: record.kind,
                from: record.from,
                from_node: record.from_node,
                to,
                to_node: record.to_node,
                reply_to: record.reply_to,
                sent_at_us: record.sent_at_us,
                completed_at_us: at_us,
                latency_us: Some(at_us - record.sent_at_us),
                link: Some(record.link),
                hops: record.hops,
                outcome: TraceOutcome::Delivered,
            });

            let mut outbox = Vec::new();
            {
                let mut ctx = Ctx {
                    now_us: self.clock_us,
                    self_addr: to,
                    outbox: &mut outbox,
                };
                handler.handle(env, &mut ctx);
            }
            if let Some(endpoint) = self.endpoints.get_mut(&to) {
                endpoint.handler = Some(handler);
            }
            for outgoing in outbox {
                self.dispatch(to, &handler_node, outgoing.env, outgoing.via_owner_node);
            }
        }
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn sends_attempted(&self) -> u64 {
        self.sends_attempted
    }

    /// Hop-level trace as line-delimited JSON.
    pub fn export_trace_ldjson(&self, mut w: impl Write) -> std::io::Result<()> {
        for record in &self.trace {
            serde_json::to_writer(&mut w, record)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fogbus::envelope::{Payload, PayloadBody};
    use crate::mesh::{build_full_mesh, sample_nodes, vpn_cidr};
    use std::cell::RefCell;
    use std::rc::Rc;

    /// Records everything it receives; optionally echoes an ack back.
    struct Sink {
        name: String,
        received: Rc<RefCell<Vec<Envelope>>>,
        echo: bool,
    }

    impl Component for Sink {
        fn name(&self) -> &str {
            &self.name
        }
        fn handle(&mut self, env: Envelope, ctx: &mut Ctx<'_>) {
            self.received.borrow_mut().push(env.clone());
            if self.echo {
                let reply = Envelope::new(
                    env.request_id,
                    ctx.self_addr(),
                    env.reply_to,
                    Payload {
                        route_to: None,
                        from_name: Some(self.name.clone()),
                        body: PayloadBody::Ack {
                            of: env.kind,
                            note: None,
                        },
                    },
                );
                ctx.send(reply);
            }
        }
    }

    fn test_sim(overlay: bool, seed: u64) -> Simulation {
        let nodes = sample_nodes();
        let topo = build_full_mesh(&nodes, vpn_cidr(), 4999).expect("mesh builds");
        let profiles: BTreeMap<String, NodeProfile> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                (
                    n.tag.clone(),
                    NodeProfile {
                        layer: n.layer,
                        vpn_ip: n.private_ip,
                        pod_subnet: Some(format!("10.42.{i}.0/24").parse().expect("cidr")),
                    },
                )
            })
            .collect();
        Simulation::new(
            profiles,
            topo.configs,
            LatencyModel::default(),
            overlay,
            seed,
        )
    }

    fn register_sink(
        sim: &mut Simulation,
        addr: &str,
        node: &str,
        echo: bool,
    ) -> Rc<RefCell<Vec<Envelope>>> {
        let received = Rc::new(RefCell::new(Vec::new()));
        sim.register_endpoint(
            addr.parse().expect("address"),
            node,
            None,
            Box::new(Sink {
                name: format!("sink-{addr}"),
                received: Rc::clone(&received),
                echo,
            }),
        )
        .expect("registers");
        received
    }

    fn ack_to(request_id: u64, from: &str, to: &str) -> Envelope {
        Envelope::new(
            request_id,
            from.parse().expect("address"),
            to.parse().expect("address"),
            Payload {
                route_to: None,
                from_name: None,
                body: PayloadBody::Ack {
                    of: MessageKind::Ack,
                    note: None,
                },
            },
        )
    }

    #[test]
    fn vpn_send_delivers_with_link_latency() {
        let mut sim = test_sim(false, 42);
        register_sink(&mut sim, "192.0.0.1:5000", "A", false);
        let received = register_sink(&mut sim, "192.0.0.2:5000", "B", false);
        let result = sim
            .send_from(
                "192.0.0.1:5000".parse().expect("address"),
                ack_to(1, "192.0.0.1:5000", "192.0.0.2:5000"),
            )
            .expect("sender registered");
        assert!(result.delivered);
        let latency = result.latency_ms.expect("latency present");
        // cloud-cloud base 6ms, jitter ±0.4ms, no overlay
        assert!((5.6..=6.4).contains(&latency), "latency {latency}");
        sim.run_until_idle();
        assert_eq!(received.borrow().len(), 1);
    }

    #[test]
    fn cross_node_pod_address_is_unroutable_without_extension() {
        let mut sim = test_sim(true, 42);
        register_sink(&mut sim, "10.42.0.5:7000", "A", false);
        register_sink(&mut sim, "10.42.1.3:7000", "B", false);
        let result = sim
            .send_from(
                "10.42.0.5:7000".parse().expect("address"),
                ack_to(1, "10.42.0.5:7000", "10.42.1.3:7000"),
            )
            .expect("sender registered");
        assert!(!result.delivered);
        assert_eq!(result.failure_reason, Some(FailureReason::Unroutable));
    }

    #[test]
    fn same_node_pod_address_delivers() {
        let mut sim = test_sim(true, 42);
        register_sink(&mut sim, "10.42.0.5:7000", "A", false);
        let received = register_sink(&mut sim, "10.42.0.9:7000", "A", false);
        let result = sim
            .send_from(
                "10.42.0.5:7000".parse().expect("address"),
                ack_to(1, "10.42.0.5:7000", "10.42.0.9:7000"),
            )
            .expect("sender registered");
        assert!(result.delivered);
        sim.run_until_idle();
        assert_eq!(received.borrow().len(), 1);
    }

    #[test]
    fn extended_mesh_routes_pod_addresses() {
        let nodes = sample_nodes();
        let topo = build_full_mesh(&nodes, vpn_cidr(), 4999).expect("mesh builds");
        let mut owner_map = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            owner_map.insert(
                n.tag.clone(),
                format!("10.42.{i}.0/24").parse().expect("cidr"),
            );
        }
        let extended = crate::mesh::extend_allowed_ips(
            &topo,
            "10.42.0.0/16".parse().expect("cidr"),
            &owner_map,
        )
        .expect("extends");
        let mut sim = test_sim(true, 42);
        sim.set_mesh(extended.configs);
        register_sink(&mut sim, "10.42.0.5:7000", "A", false);
        let received = register_sink(&mut sim, "10.42.1.3:7000", "B", false);
        let result = sim
            .send_from(
                "10.42.0.5:7000".parse().expect("address"),
                ack_to(1, "10.42.0.5:7000", "10.42.1.3:7000"),
            )
            .expect("sender registered");
        assert!(result.delivered, "result {result:?}");
        sim.run_until_idle();
        assert_eq!(received.borrow().len(), 1);
    }

    #[test]
    fn failed_endpoint_rejects_and_drops() {
        let mut sim = test_sim(false, 42);
        register_sink(&mut sim, "192.0.0.1:5000", "A", false);
        register_sink(&mut sim, "192.0.0.2:5000", "B", false);
        let dest: Address = "192.0.0.2:5000".parse().expect("address");
        // one envelope in flight when the endpoint dies
        sim.send_from(
            "192.0.0.1:5000".parse().expect("address"),
            ack_to(1, "192.0.0.1:5000", "192.0.0.2:5000"),
        )
        .expect("sends");
        let failed = sim.fail_endpoint(dest).expect("registered");
        assert_eq!(failed.node, "B");
        assert!(matches!(
            sim.fail_endpoint(dest),
            Err(SimError::UnknownEndpoint(_))
        ));
        let result = sim
            .send_from(
                "192.0.0.1:5000".parse().expect("address"),
                ack_to(2, "192.0.0.1:5000", "192.0.0.2:5000"),
            )
            .expect("sends");
        assert_eq!(result.failure_reason, Some(FailureReason::EndpointDown));
        sim.run_until_idle();
        let outcomes: Vec<TraceOutcome> = sim.trace().iter().map(|r| r.outcome).collect();
        assert!(outcomes.contains(&TraceOutcome::Failed(FailureReason::Dropped)));
        assert_eq!(sim.trace().len() as u64, sim.sends_attempted());
    }

    #[test]
    fn unregistered_sender_is_rejected() {
        let mut sim = test_sim(false, 42);
        let err = sim
            .send_from(
                "192.0.0.9:1".parse().expect("address"),
                ack_to(1, "192.0.0.9:1", "192.0.0.1:5000"),
            )
            .expect_err("unregistered sender");
        assert!(matches!(err, SimError::SenderNotRegistered(_)));
    }

    #[test]
    fn deliveries_processed_in_timestamp_order() {
        // same-node latency 5ms vs cloud-cloud 3ms: the second send
        // arrives first
        let model = LatencyModel {
            same_node_ms: 5.0,
            vpn_cloud_cloud_ms: 3.0,
            vpn_cloud_edge_ms: 3.0,
            cluster_overlay_extra_ms: 0.0,
            jitter_ms: 0.0,
        };
        let nodes = sample_nodes();
        let topo = build_full_mesh(&nodes, vpn_cidr(), 4999).expect("mesh builds");
        let profiles: BTreeMap<String, NodeProfile> = nodes
            .iter()
            .map(|n| {
                (
                    n.tag.clone(),
                    NodeProfile {
                        layer: n.layer,
                        vpn_ip: n.private_ip,
                        pod_subnet: None,
                    },
                )
            })
            .collect();
        let mut sim = Simulation::new(profiles, topo.configs, model, false, 0);
        let sender: Address = "192.0.0.1:5000".parse().expect("address");
        register_sink(&mut sim, "192.0.0.1:5000", "A", false);
        register_sink(&mut sim, "192.0.0.1:5001", "A", false);
        register_sink(&mut sim, "192.0.0.2:5000", "B", false);
        sim.send_from(sender, ack_to(1, "192.0.0.1:5000", "192.0.0.1:5001"))
            .expect("sends"); // t=5
        sim.send_from(sender, ack_to(2, "192.0.0.1:5000", "192.0.0.2:5000"))
            .expect("sends"); // t=3
        sim.run_until_idle();
        let delivered: Vec<u64> = sim
            .trace()
            .iter()
            .filter(|r| r.outcome == TraceOutcome::Delivered)
            .map(|r| r.request_id)
            .collect();
        assert_eq!(delivered, vec![2, 1]);
        assert_eq!(sim.now_ms(), 5.0);
    }

    #[test]
    fn empty_queue_run_is_a_noop() {
        let mut sim = test_sim(false, 42);
        let before = sim.now_us();
        sim.run_until_idle();
        assert_eq!(sim.now_us(), before);
    }

    #[test]
    fn identical_seeds_replay_identical_traces() {
        let run = |seed: u64| {
            let mut sim = test_sim(true, seed);
            register_sink(&mut sim, "192.0.0.1:5000", "A", true);
            register_sink(&mut sim, "192.0.0.5:7000", "E", false);
            for i in 0..10 {
                sim.send_from(
                    "192.0.0.5:7000".parse().expect("address"),
                    ack_to(i, "192.0.0.5:7000", "192.0.0.1:5000"),
                )
                .expect("sends");
                sim.run_until_idle();
            }
            sim.trace().to_vec()
        };
        let a = run(42);
        let b = run(42);
        assert_eq!(a, b);
        let c = run(43);
        assert_ne!(
            a.iter().map(|r| r.latency_us).collect::<Vec<_>>(),
            c.iter().map(|r| r.latency_us).collect::<Vec<_>>()
        );
    }

    #[test]
    fn per_pair_fifo_is_preserved() {
        // force a potential reorder: large jitter relative to base
        let model = LatencyModel {
            same_node_ms: 1.0,
            vpn_cloud_cloud_ms: 2.0,
            vpn_cloud_edge_ms: 2.0,
            cluster_overlay_extra_ms: 0.0,
            jitter_ms: 1.9,
        };
        let nodes = sample_nodes();
        let topo = build_full_mesh(&nodes, vpn_cidr(), 4999).expect("mesh builds");
        let profiles: BTreeMap<String, NodeProfile> = nodes
            .iter()
            .map(|n| {
                (
                    n.tag.clone(),
                    NodeProfile {
                        layer: n.layer,
                        vpn_ip: n.private_ip,
                        pod_subnet: None,
                    },
                )
            })
            .collect();
        for seed in 0..20 {
            let mut sim =
                Simulation::new(profiles.clone(), topo.configs.clone(), model, false, seed);
            register_sink(&mut sim, "192.0.0.1:5000", "A", false);
            let received = register_sink(&mut sim, "192.0.0.2:5000", "B", false);
            for i in 0..20 {
                sim.send_from(
                    "192.0.0.1:5000".parse().expect("address"),
                    ack_to(i, "192.0.0.1:5000", "192.0.0.2:5000"),
                )
                .expect("sends");
            }
            sim.run_until_idle();
            let order: Vec<u64> = received.borrow().iter().map(|e| e.request_id).collect();
            assert_eq!(order, (0..20).collect::<Vec<u64>>(), "seed {seed}");
        }
    }

    #[test]
    fn overlay_adds_fixed_extra_per_hop() {
        let mut native = test_sim(false, 7);
        let mut overlay = test_sim(true, 7);
        for sim in [&mut native, &mut overlay] {
            register_sink(sim, "192.0.0.1:5000", "A", false);
            register_sink(sim, "192.0.0.2:5000", "B", false);
        }
        let send = |sim: &mut Simulation| {
            sim.send_from(
                "192.0.0.1:5000".parse().expect("address"),
                ack_to(1, "192.0.0.1:5000", "192.0.0.2:5000"),
            )
            .expect("sends")
            .latency_ms
            .expect("latency")
        };
        let native_ms = send(&mut native);
        let overlay_ms = send(&mut overlay);
        // identical seeds draw identical jitter, so the gap is exactly the
        // configured overlay extra
        assert!((overlay_ms - native_ms - 2.0).abs() < 1e-9);
    }

    #[test]
    fn probe_route_matches_independent_rules() {
        use rand::Rng;
        let sim = test_sim(true, 42);
        let nodes = sample_nodes();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..500 {
            let from = &nodes[rng.gen_range(0..nodes.len())];
            let dst = Ipv4Addr::from(rng.gen::<u32>());
            let probed = sim.probe_route(&from.tag, dst);
            // independent rule evaluation: same node, or the VPN /32 of
            // another node; everything else (including the unassigned rest
            // of the VPN block) is unroutable without an extension
            let same_node = dst == from.private_ip
                || format!(
                    "10.42.{}.0/24",
                    nodes
                        .iter()
                        .position(|n| n.tag == from.tag)
                        .expect("present")
                )
                .parse::<Cidr>()
                .expect("cidr")
                .contains(dst);
            let vpn_peer = nodes
                .iter()
                .any(|n| n.tag != from.tag && n.private_ip == dst);
            let expect_ok = same_node || vpn_peer;
            assert_eq!(probed.is_ok(), expect_ok, "from {} to {dst}", from.tag);
        }
    }

    #[test]
    fn probe_agrees_with_rules_on_extended_mesh() {
        use rand::Rng;
        let nodes = sample_nodes();
        let topo = build_full_mesh(&nodes, vpn_cidr(), 4999).expect("mesh builds");
        let pod_cidr: Cidr = "10.42.0.0/16".parse().expect("cidr");
        let mut owner_map = BTreeMap::new();
        let mut subnets = Vec::new();
        for (i, n) in nodes.iter().enumerate() {
            let subnet: Cidr = format!("10.42.{i}.0/24").parse().expect("cidr");
            owner_map.insert(n.tag.clone(), subnet);
            subnets.push(subnet);
        }
        let extended =
            crate::mesh::extend_allowed_ips(&topo, pod_cidr, &owner_map).expect("extends");
        let mut sim = test_sim(true, 42);
        sim.set_mesh(extended.configs);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let from = &nodes[rng.gen_range(0..nodes.len())];
            let dst = Ipv4Addr::from(rng.gen::<u32>());
            let probed = sim.probe_route(&from.tag, dst);
            let vpn_peer = nodes.iter().any(|n| n.private_ip == dst);
            let owned_pod = subnets.iter().any(|s| s.contains(dst));
            assert_eq!(
                probed.is_ok(),
                vpn_peer || owned_pod,
                "from {} to {dst}",
                from.tag
            );
        }
    }

    #[test]
    fn trace_exports_as_ldjson() {
        let mut sim = test_sim(false, 42);
        register_sink(&mut sim, "192.0.0.1:5000", "A", false);
        register_sink(&mut sim, "192.0.0.2:5000", "B", false);
        sim.send_from(
            "192.0.0.1:5000".parse().expect("address"),
            ack_to(1, "192.0.0.1:5000", "192.0.0.2:5000"),
        )
        .expect("sends");
        sim.run_until_idle();
        let mut buf = Vec::new();
        sim.export_trace_ldjson(&mut buf).expect("writes");
        let text = String::from_utf8(buf).expect("utf8");
        assert_eq!(text.lines().count(), 1);
        let v: serde_json::Value =
            serde_json::from_str(text.lines().next().expect("line")).expect("valid json");
        for key in [
            "env_seq",
            "request_id",
            "kind",
            "from",
            "from_node",
            "to",
            "to_node",
            "reply_to",
            "sent_at_us",
            "completed_at_us",
            "latency_us",
            "link",
            "hops",
            "outcome",
        ] {
            assert!(v.get(key).is_some(), "missing field `{key}`");
        }
        assert_eq!(v["outcome"], "delivered");
        assert_eq!(v["link"], "vpn_cloud_cloud");
    }

    #[test]
    fn latency_model_parses_and_validates() {
        let text = "# comment\nsame_node_ms = 2\nvpn_cloud_cloud_ms = 5.5\njitter_ms = 0\n";
        let model = LatencyModel::parse(text).expect("parses");
        assert_eq!(model.same_node_ms, 2.0);
        assert_eq!(model.vpn_cloud_cloud_ms, 5.5);
        assert_eq!(model.jitter_ms, 0.0);
        // untouched keys keep defaults
        assert_eq!(model.cluster_overlay_extra_ms, 2.0);
        assert!(LatencyModel::parse("bogus_key = 1\n").is_err());
        assert!(LatencyModel::parse("same_node_ms = -1\n").is_err());
        assert!(LatencyModel::parse("same_node_ms\n").is_err());
    }
}
