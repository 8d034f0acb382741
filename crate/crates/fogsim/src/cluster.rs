//! Miniature orchestration state machine: nodes, deployments, and pods.
//! Pods are placed onto nodes (pinned or least-loaded), receive addresses
//! under host-network or pod-network mode, get their environment resolved
//! (including the pod-IP field reference), and are replaced by reconcile
//! when they fail under an always-restart policy.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{Address, Cidr};
use crate::addressing::{AddressingStrategy, NetworkMode};
use crate::manifest::{DeploymentSpec, EnvValue, RestartPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),
    #[error("pod subnets of `{a}` and `{b}` overlap")]
    OverlappingPodSubnets { a: String, b: String },
    #[error("deployment `{0}` already exists")]
    DuplicateDeployment(String),
    #[error("unknown deployment `{0}`")]
    UnknownDeployment(String),
    #[error("pinned node `{0}` does not exist")]
    UnknownNode(String),
    #[error("cluster has no nodes")]
    NoNodes,
    #[error("pod subnet {subnet} of node `{node}` is exhausted")]
    PodSubnetExhausted { node: String, subnet: Cidr },
    #[error("port {port} already in use on node `{node}`")]
    PortInUse { node: String, port: u16 },
    #[error("unknown pod uid {0}")]
    UnknownPod(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Server,
    Agent,
}

/// One member of the cluster. `node_address` is the address the node is
/// reachable at inside the experiment network (the VPN address in hybrid
/// mode); `pod_subnet` is this node's slice of the cluster pod CIDR.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterNode {
    pub name: String,
    pub role: NodeRole,
    pub node_address: Ipv4Addr,
    pub pod_subnet: Cidr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PodPhase {
    Pending,
    Running,
    Failed,
}

/// One pod: a single container plus its network identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Pod {
    pub uid: u64,
    pub deployment: String,
    pub node: String,
    pub phase: PodPhase,
    pub bind_address: Option<Address>,
    pub pod_ip: Ipv4Addr,
    pub port: u16,
    pub host_network: bool,
    pub restart_count: u32,
    /// Fully resolved environment (field references substituted).
    pub env: Vec<(String, String)>,
}

/// One line of the cluster event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEvent {
    pub time: f64,
    pub action: String,
    pub pod: String,
    pub node: String,
}

/// A restart performed by reconcile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestartAction {
    pub deployment: String,
    pub node: String,
    pub old_uid: u64,
    pub new_uid: u64,
}

/// Cluster state: nodes, deployments, live pods, per-node pod-IP cursors,
/// and the event log. Mutation happens only through the methods here.
#[derive(Debug)]
pub struct ClusterState {
    nodes: Vec<ClusterNode>,
    deployments: BTreeMap<String, DeploymentSpec>,
    pods: BTreeMap<u64, Pod>,
    ip_cursors: BTreeMap<String, u32>,
    host_ports: BTreeSet<(String, u16)>,
    next_uid: u64,
    ephemeral_base: u16,
    next_ephemeral: u16,
    events: Vec<ClusterEvent>,
    #[allow(dead_code)] // modeled join credential, queried by nothing yet
    join_token: String,
}

impl ClusterState {
    /// Builds a cluster from its node roster and the agent join token
    /// (modeled as a plain constructor argument).
    pub fn new(
        nodes: Vec<ClusterNode>,
        join_token: impl Into<String>,
    ) -> Result<Self, ClusterError> {
        if nodes.is_empty() {
            return Err(ClusterError::NoNodes);
        }
        for (i, node) in nodes.iter().enumerate() {
            for other in &nodes[..i] {
                if other.name == node.name {
                    return Err(ClusterError::DuplicateNode(node.name.clone()));
                }
                if other.pod_subnet.overlaps(&node.pod_subnet) {
                    return Err(ClusterError::OverlappingPodSubnets {
                        a: other.name.clone(),
                        b: node.name.clone(),
                    });
                }
            }
        }
        Ok(Self {
            nodes,
            deployments: BTreeMap::new(),
            pods: BTreeMap::new(),
            ip_cursors: BTreeMap::new(),
            host_ports: BTreeSet::new(),
            next_uid: 1,
            ephemeral_base: 7000,
            next_ephemeral: 7000,
            events: Vec::new(),
            join_token: join_token.into(),
        })
    }

    pub fn with_ephemeral_base(mut self, base: u16) -> Self {
        self.ephemeral_base = base;
        self.next_ephemeral = base;
        self
    }

    pub fn nodes(&self) -> &[ClusterNode] {
        &self.nodes
    }

    pub fn node(&self, name: &str) -> Option<&ClusterNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn deployment(&self, name: &str) -> Option<&DeploymentSpec> {
        self.deployments.get(name)
    }

    pub fn pods(&self) -> impl Iterator<Item = &Pod> {
        self.pods.values()
    }

    pub fn pod(&self, uid: u64) -> Option<&Pod> {
        self.pods.get(&uid)
    }

    pub fn pods_of(&self, deployment: &str) -> Vec<&Pod> {
        self.pods
            .values()
            .filter(|p| p.deployment == deployment)
            .collect()
    }

    pub fn events(&self) -> &[ClusterEvent] {
        &self.events
    }

    /// Event log as line-delimited JSON records `{time, action, pod, node}`.
    pub fn export_events_ldjson(&self, mut w: impl Write) -> std::io::Result<()> {
        for event in &self.events {
            serde_json::to_writer(&mut w, event)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Registers a deployment. Starting pods is a separate step.
    pub fn apply(&mut self, spec: DeploymentSpec) -> Result<(), ClusterError> {
        if self.deployments.contains_key(&spec.name) {
            return Err(ClusterError::DuplicateDeployment(spec.name));
        }
        self.deployments.insert(spec.name.clone(), spec);
        Ok(())
    }

    /// Picks the node for a pod of `spec`: the pinned node when set,
    /// otherwise the node with the fewest running pods, ties broken by
    /// node-name order.
    pub fn schedule_pod(&self, spec: &DeploymentSpec) -> Result<String, ClusterError> {
        if self.nodes.is_empty() {
            return Err(ClusterError::NoNodes);
        }
        if let Some(pinned) = &spec.node_name {
            if self.node(pinned).is_none() {
                return Err(ClusterError::UnknownNode(pinned.clone()));
            }
            return Ok(pinned.clone());
        }
        let mut names: Vec<&str> = self.nodes.iter().map(|n| n.name.as_str()).collect();
        names.sort_unstable();
        let running = |node: &str| {
            self.pods
                .values()
                .filter(|p| p.node == node && p.phase == PodPhase::Running)
                .count()
        };
        let best = names
            .into_iter()
            .min_by_key(|name| (running(name), name.to_string()))
            .expect("at least one node");
        Ok(best.to_string())
    }

    fn allocate_pod_ip(&mut self, node_name: &str) -> Result<Ipv4Addr, ClusterError> {
        let node = self
            .node(node_name)
            .ok_or_else(|| ClusterError::UnknownNode(node_name.to_string()))?;
        let subnet = node.pod_subnet;
        let cursor = self.ip_cursors.entry(node_name.to_string()).or_insert(0);
        *cursor += 1;
        subnet
            .host(*cursor)
            .ok_or(ClusterError::PodSubnetExhausted {
                node: node_name.to_string(),
                subnet,
            })
    }

    fn resolve_port(&mut self, spec: &DeploymentSpec) -> u16 {
        if let Some(port) = spec.container_port {
            return port;
        }
        if let Some(idx) = spec.args.iter().position(|a| a == "--bindPort") {
            if let Some(port) = spec.args.get(idx + 1).and_then(|p| p.parse().ok()) {
                return port;
            }
        }
        let port = self.next_ephemeral;
        self.next_ephemeral += 1;
        port
    }

    /// Starts one pod of an applied deployment under the given strategy:
    /// schedules it, assigns its address (the node address under host
    /// networking, the next free pod-subnet address otherwise), resolves
    /// the environment, and marks it running. The caller is responsible
    /// for registering the endpoint with the transport.
    pub fn start_pod(
        &mut self,
        deployment: &str,
        strategy: &AddressingStrategy,
        now_ms: f64,
    ) -> Result<u64, ClusterError> {
        let spec = self
            .deployments
            .get(deployment)
            .ok_or_else(|| ClusterError::UnknownDeployment(deployment.to_string()))?
            .clone();
        let node_name = self.schedule_pod(&spec)?;
        self.start_pod_on(&spec, &node_name, strategy, 0, now_ms)
    }

    fn start_pod_on(
        &mut self,
        spec: &DeploymentSpec,
        node_name: &str,
        strategy: &AddressingStrategy,
        restart_count: u32,
        now_ms: f64,
    ) -> Result<u64, ClusterError> {
        let host_network = strategy.network_mode() == NetworkMode::Host;
        let port = self.resolve_port(spec);
        let node_address = self
            .node(node_name)
            .ok_or_else(|| ClusterError::UnknownNode(node_name.to_string()))?
            .node_address;

        let pod_ip = if host_network {
            // the pod shares the node's network namespace: one port space
            if self.host_ports.contains(&(node_name.to_string(), port)) {
                return Err(ClusterError::PortInUse {
                    node: node_name.to_string(),
                    port,
                });
            }
            node_address
        } else {
            self.allocate_pod_ip(node_name)?
        };
        if host_network {
            self.host_ports.insert((node_name.to_string(), port));
        }

        let env = spec
            .env
            .iter()
            .map(|var| {
                let value = match &var.value {
                    EnvValue::Literal(v) => v.clone(),
                    EnvValue::PodIpFieldRef => pod_ip.to_string(),
                };
                (var.name.clone(), value)
            })
            .collect();

        let uid = self.next_uid;
        self.next_uid += 1;
        let pod = Pod {
            uid,
            deployment: spec.name.clone(),
            node: node_name.to_string(),
            phase: PodPhase::Running,
            bind_address: Some(Address::new(pod_ip, port)),
            pod_ip,
            port,
            host_network,
            restart_count,
            env,
        };
        self.pods.insert(uid, pod);
        self.events.push(ClusterEvent {
            time: now_ms,
            action: if restart_count == 0 {
                "started"
            } else {
                "restarted"
            }
            .to_string(),
            pod: format!("{}-{uid}", spec.name),
            node: node_name.to_string(),
        });
        Ok(uid)
    }

    /// Marks a pod failed and releases its node-port claim so a
    /// replacement can bind it again.
    pub fn mark_failed(&mut self, uid: u64, now_ms: f64) -> Result<(), ClusterError> {
        let pod = self
            .pods
            .get_mut(&uid)
            .ok_or(ClusterError::UnknownPod(uid))?;
        pod.phase = PodPhase::Failed;
        pod.bind_address = None;
        let host_network = pod.host_network;
        let key = (pod.node.clone(), pod.port);
        let event = ClusterEvent {
            time: now_ms,
            action: "failed".to_string(),
            pod: format!("{}-{}", pod.deployment, uid),
            node: pod.node.clone(),
        };
        if host_network {
            self.host_ports.remove(&key);
        }
        self.events.push(event);
        Ok(())
    }

    /// Replaces every failed pod of an always-restart deployment with a
    /// fresh pod on the same node. The replacement gets a new pod IP in
    /// pod-network mode and the node address again under host networking;
    /// its restart count is incremented. Failed pods of never-restart
    /// deployments stay as they are.
    pub fn reconcile(
        &mut self,
        strategy: &AddressingStrategy,
        now_ms: f64,
    ) -> Result<Vec<RestartAction>, ClusterError> {
        let failed: Vec<(u64, String, String, u32)> = self
            .pods
            .values()
            .filter(|p| p.phase == PodPhase::Failed)
            .filter(|p| {
                self.deployments
                    .get(&p.deployment)
                    .is_some_and(|d| d.restart_policy == RestartPolicy::Always)
            })
            .map(|p| (p.uid, p.deployment.clone(), p.node.clone(), p.restart_count))
            .collect();

        let mut actions = Vec::new();
        for (old_uid, deployment, node, restarts) in failed {
            let spec = self.deployments[&deployment].clone();
            self.pods.remove(&old_uid);
            let new_uid = self.start_pod_on(&spec, &node, strategy, restarts + 1, now_ms)?;
            actions.push(RestartAction {
                deployment,
                node,
                old_uid,
                new_uid,
            });
        }
        Ok(actions)
    }
}
