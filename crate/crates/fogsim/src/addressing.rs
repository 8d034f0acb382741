//! The three pod-addressing patterns as interchangeable strategies, plus
//! the proxy server with its name-based routing table.
//!
//! A strategy decides two things per pod: the address its component binds
//! (`resolve_bind`) and the address it advertises to peers for replies
//! (`resolve_advertise`). Host networking binds and advertises the node
//! address; the environment-variable pattern binds and advertises the pod
//! IP; the proxy pattern binds locally but advertises the proxy, which
//! forwards by logical component name.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::addr::Address;
use crate::cluster::{ClusterNode, Pod};
use crate::fogbus::envelope::{Envelope, Payload, PayloadBody};
use crate::netsim::{Component, Ctx};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressingError {
    #[error("no route registered for logical name `{0}`")]
    UnknownName(String),
}

/// How pods get their network identity for one experiment run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddressingStrategy {
    HostNetwork,
    ProxyServer { proxy_address: Address },
    EnvVariable,
}

/// Whether pods share the node's network namespace or get their own
/// cluster-network address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkMode {
    Host,
    PodNet,
}

impl AddressingStrategy {
    pub fn network_mode(&self) -> NetworkMode {
        match self {
            AddressingStrategy::HostNetwork => NetworkMode::Host,
            AddressingStrategy::ProxyServer { .. } | AddressingStrategy::EnvVariable => {
                NetworkMode::PodNet
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AddressingStrategy::HostNetwork => "host_network",
            AddressingStrategy::ProxyServer { .. } => "proxy_server",
            AddressingStrategy::EnvVariable => "env_variable",
        }
    }
}

/// The IP a pod's component binds under the strategy.
pub fn resolve_bind(strategy: &AddressingStrategy, pod: &Pod, node: &ClusterNode) -> Ipv4Addr {
    match strategy {
        AddressingStrategy::HostNetwork => node.node_address,
        // components still bind locally; only advertisement changes
        AddressingStrategy::ProxyServer { .. } | AddressingStrategy::EnvVariable => pod.pod_ip,
    }
}

/// The address a pod's component advertises in `reply_to`.
pub fn resolve_advertise(strategy: &AddressingStrategy, pod: &Pod, node: &ClusterNode) -> Address {
    match strategy {
        AddressingStrategy::HostNetwork => Address::new(node.node_address, pod.port),
        AddressingStrategy::EnvVariable => Address::new(pod.pod_ip, pod.port),
        AddressingStrategy::ProxyServer { proxy_address } => *proxy_address,
    }
}

/// Where a logical component currently lives: its real bind address and the
/// node hosting it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyRoute {
    pub address: Address,
    pub node: String,
}

/// One insertion or update of the routing table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyTableEvent {
    pub name: String,
    pub address: Address,
    pub replaced: Option<Address>,
}

/// Logical component name -> current real address. Re-registration
/// overwrites, so restarted pods with fresh addresses keep receiving
/// traffic.
#[derive(Debug, Default)]
pub struct ProxyRoutingTable {
    routes: BTreeMap<String, ProxyRoute>,
    log: Vec<ProxyTableEvent>,
}

impl ProxyRoutingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, address: Address, node: impl Into<String>) {
        let name = name.into();
        let replaced = self.routes.get(&name).map(|r| r.address);
        self.log.push(ProxyTableEvent {
            name: name.clone(),
            address,
            replaced,
        });
        self.routes.insert(
            name,
            ProxyRoute {
                address,
                node: node.into(),
            },
        );
    }

    pub fn lookup(&self, name: &str) -> Option<&ProxyRoute> {
        self.routes.get(name)
    }

    pub fn log(&self) -> &[ProxyTableEvent] {
        &self.log
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }
}

/// What the proxy does with one incoming envelope.
#[derive(Debug, Clone, PartialEq)]
pub enum ForwardAction {
    /// Deliver to the rewritten destination via the owning node.
    Forward(Envelope),
    /// No route for the logical name (or a loop was detected): return an
    /// undeliverable notice to the sender's reply address.
    Undeliverable { notice: Envelope, reason: String },
    /// Nothing sensible to do (e.g. a notice about a notice); swallow.
    Drop { reason: String },
}

/// Pure forwarding decision: rewrites `dest` to the table entry for the
/// payload's `route_to` name and bumps the hop counter. Loop guards: an
/// envelope that already crossed the proxy once is never forwarded again,
/// and a name resolving to the proxy itself is refused.
pub fn proxy_forward(
    table: &ProxyRoutingTable,
    env: &Envelope,
    proxy_name: &str,
    proxy_address: Address,
) -> ForwardAction {
    let undeliverable = |reason: String| {
        if matches!(env.payload.body, PayloadBody::Ack { .. }) {
            // never generate notices about notices
            return ForwardAction::Drop { reason };
        }
        let notice = Envelope::new(
            env.request_id,
            proxy_address,
            env.reply_to,
            Payload {
                route_to: env.payload.from_name.clone(),
                from_name: Some(proxy_name.to_string()),
                body: PayloadBody::Ack {
                    of: env.kind,
                    note: Some(reason.clone()),
                },
            },
        );
        ForwardAction::Undeliverable { notice, reason }
    };

    if env.hops >= 1 {
        return undeliverable(format!(
            "loop: envelope already crossed the proxy ({} hops)",
            env.hops
        ));
    }
    let Some(name) = env.payload.route_to.as_deref() else {
        return undeliverable("missing route_to header".to_string());
    };
    if name == proxy_name {
        return undeliverable("refusing to forward to the proxy itself".to_string());
    }
    match table.lookup(name) {
        None => undeliverable(format!("undeliverable: unknown component `{name}`")),
        Some(route) => {
            if route.address == proxy_address {
                return undeliverable("refusing to forward to the proxy itself".to_string());
            }
            let mut forwarded = env.clone();
            forwarded.dest = route.address;
            forwarded.hops += 1;
            ForwardAction::Forward(forwarded)
        }
    }
}

/// The proxy server component: applies [`proxy_forward`] to everything it
/// receives. Forwarded envelopes travel via the destination's owning node,
/// which is exactly the routing policy a host-networked proxy can apply
/// that raw pod-to-pod traffic cannot.
pub struct ProxyComponent {
    pub name: String,
    pub address: Address,
    pub table: std::rc::Rc<std::cell::RefCell<ProxyRoutingTable>>,
}

impl Component for ProxyComponent {
    fn name(&self) -> &str {
        &self.name
    }

    fn handle(&mut self, env: Envelope, ctx: &mut Ctx<'_>) {
        let action = proxy_forward(&self.table.borrow(), &env, &self.name, self.address);
        match action {
            ForwardAction::Forward(forwarded) => ctx.send_via_owner_node(forwarded),
            ForwardAction::Undeliverable { notice, .. } => ctx.send(notice),
            ForwardAction::Drop { .. } => {}
        }
    }
}
