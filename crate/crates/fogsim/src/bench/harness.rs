//! Wires the pieces together for one experiment: mesh overlay, cluster,
//! simulator, proxy (when selected), and the framework components, then
//! drives submissions and fault-injection scenarios.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::Path;
use std::rc::Rc;

use crate::addr::Address;
use crate::addressing::{resolve_advertise, AddressingStrategy, ProxyComponent, ProxyRoutingTable};
use crate::bench::config::{ExperimentConfig, StrategyChoice};
use crate::bench::BenchError;
use crate::cluster::{ClusterNode, ClusterState, NodeRole, RestartAction};
use crate::fogbus::calc::{execute_calculation, CalcInput, CalcOutput};
use crate::fogbus::components::{
    user_submit, ActorComponent, ActorStats, Comms, CommsMode, MasterComponent,
    RemoteLoggerComponent, SubmitError, Target, UserComponent, UserHandle, UserInbox,
};
use crate::fogbus::envelope::PayloadBody;
use crate::fogbus::logstore::LogStore;
use crate::fogbus::scheduler::SchedulerState;
use crate::manifest::{parse_deployment_with_warnings, DeploymentSpec, RestartPolicy};
use crate::mesh::{
    build_full_mesh, extend_allowed_ips, parse_node_table, validate_full_mesh, MeshTopology,
    NodeSpec,
};
use crate::netsim::{Component, LatencyModel, NodeProfile, Simulation};

/// Which framework component an image label denotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentRole {
    RemoteLogger,
    Master,
    Actor,
    User,
}

fn role_of_image(image: &str) -> Option<ComponentRole> {
    let base = image.rsplit('/').next().unwrap_or(image);
    if base.contains("remote_logger") || base.contains("remote-logger") {
        Some(ComponentRole::RemoteLogger)
    } else if base.contains("master") {
        Some(ComponentRole::Master)
    } else if base.contains("actor") {
        Some(ComponentRole::Actor)
    } else if base.contains("user") {
        Some(ComponentRole::User)
    } else {
        None
    }
}

/// Result of one submission through the full stack.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub request_id: u64,
    pub success: bool,
    pub latency_ms: Option<f64>,
    pub failure_reason: Option<String>,
    pub output: Option<CalcOutput>,
}

/// One fully deployed experiment instance.
pub struct Experiment {
    sim: Simulation,
    cluster: ClusterState,
    strategy: AddressingStrategy,
    nodes: Vec<NodeSpec>,
    topology: MeshTopology,
    log_store: Rc<RefCell<LogStore>>,
    scheduler: Rc<RefCell<SchedulerState>>,
    actor_stats: BTreeMap<String, Rc<RefCell<ActorStats>>>,
    proxy_table: Option<Rc<RefCell<ProxyRoutingTable>>>,
    proxy_name: String,
    logger_target: Option<Target>,
    master_target: Option<Target>,
    user: Option<UserHandle>,
    manifest_warnings: Vec<String>,
    next_request_id: u64,
}

impl Experiment {
    /// Builds the full stack from a config: topology table, full mesh
    /// (optionally extended with the pod ranges), cluster, simulator,
    /// proxy, and the deployments from the manifest files plus the
    /// synthesized user pod on `user_node`.
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, BenchError> {
        cfg.validate()?;
        let read = |path: &Path| -> Result<String, BenchError> {
            std::fs::read_to_string(path).map_err(|source| BenchError::Io {
                path: path.display().to_string(),
                source,
            })
        };

        let nodes = parse_node_table(&read(&cfg.topology_file)?, cfg.listen_port)?;
        let topology = build_full_mesh(&nodes, cfg.vpn_cidr, cfg.listen_port)?;
        let report = validate_full_mesh(&topology);
        if !report.ok() {
            return Err(BenchError::MeshInvalid(report));
        }

        // per-node pod subnets: consecutive slices of the pod CIDR, eight
        // bits narrower than the range (a /16 splits into /24s)
        let sub_prefix = cfg.pod_cidr.prefix() + 8;
        let cluster_nodes: Vec<ClusterNode> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                Ok(ClusterNode {
                    name: n.name.clone(),
                    role: if i == 0 {
                        NodeRole::Server
                    } else {
                        NodeRole::Agent
                    },
                    node_address: n.private_ip,
                    pod_subnet: cfg.pod_cidr.subnet(i as u32, sub_prefix)?,
                })
            })
            .collect::<Result<_, crate::addr::AddrError>>()
            .map_err(|e| BenchError::Config(e.to_string()))?;

        let effective_topology = if cfg.solution2 {
            let owner_map: BTreeMap<String, _> = nodes
                .iter()
                .zip(&cluster_nodes)
                .map(|(spec, cn)| (spec.tag.clone(), cn.pod_subnet))
                .collect();
            extend_allowed_ips(&topology, cfg.pod_cidr, &owner_map)?
        } else {
            topology.clone()
        };

        // manifests first: the proxy lives on the master component's node
        let mut manifest_specs = Vec::new();
        let mut manifest_warnings = Vec::new();
        for path in &cfg.manifest_files {
            let (spec, warnings) = parse_deployment_with_warnings(&read(path)?)?;
            for w in warnings {
                manifest_warnings.push(format!("{}: {w}", path.display()));
            }
            manifest_specs.push(spec);
        }

        let mut cluster = ClusterState::new(cluster_nodes, "sim-join-token")?;
        for spec in &manifest_specs {
            cluster.apply(spec.clone())?;
        }
        let user_spec = DeploymentSpec {
            name: "fogbus2-user".to_string(),
            replicas: 1,
            node_name: Some(cfg.user_node.clone()),
            host_network: false,
            image: "cloudslab/fogbus2-user".to_string(),
            args: Vec::new(),
            env: Vec::new(),
            container_port: None,
            restart_policy: RestartPolicy::Always,
        };
        cluster.apply(user_spec.clone())?;

        let master_spec = manifest_specs
            .iter()
            .find(|s| role_of_image(&s.image) == Some(ComponentRole::Master))
            .ok_or_else(|| BenchError::Deploy("no master deployment in manifests".to_string()))?;
        let master_node_name = match &master_spec.node_name {
            Some(name) => name.clone(),
            None => cluster.schedule_pod(master_spec)?,
        };
        let master_node_address = cluster
            .node(&master_node_name)
            .ok_or_else(|| BenchError::Deploy(format!("unknown node `{master_node_name}`")))?
            .node_address;

        let strategy = match cfg.strategy {
            StrategyChoice::Host => AddressingStrategy::HostNetwork,
            StrategyChoice::Env => AddressingStrategy::EnvVariable,
            StrategyChoice::Proxy => AddressingStrategy::ProxyServer {
                proxy_address: Address::new(master_node_address, cfg.proxy_port),
            },
        };

        let latency = match (&cfg.latency_model, &cfg.latency_file) {
            (Some(model), _) => *model,
            (None, Some(path)) => LatencyModel::parse(&read(path)?)?,
            (None, None) => LatencyModel::default(),
        };

        // simulator keyed by node name; remap the tag-keyed mesh configs
        let tag_to_name: BTreeMap<&str, &str> = nodes
            .iter()
            .map(|n| (n.tag.as_str(), n.name.as_str()))
            .collect();
        let mesh_by_name = effective_topology
            .configs
            .iter()
            .map(|(tag, cfg)| (tag_to_name[tag.as_str()].to_string(), cfg.clone()))
            .collect();
        let profiles: BTreeMap<String, NodeProfile> = nodes
            .iter()
            .zip(cluster.nodes().to_vec())
            .map(|(spec, cn)| {
                (
                    spec.name.clone(),
                    NodeProfile {
                        layer: spec.layer,
                        vpn_ip: spec.private_ip,
                        pod_subnet: Some(cn.pod_subnet),
                    },
                )
            })
            .collect();
        let mut sim = Simulation::new(profiles, mesh_by_name, latency, !cfg.native, cfg.seed);
        sim.set_wall_clock(cfg.wall_clock);

        let mut experiment = Experiment {
            sim,
            cluster,
            strategy,
            nodes,
            topology,
            log_store: Rc::new(RefCell::new(LogStore::new())),
            scheduler: Rc::new(RefCell::new(SchedulerState::new())),
            actor_stats: BTreeMap::new(),
            proxy_table: None,
            proxy_name: "fogbus2-proxy".to_string(),
            logger_target: None,
            master_target: None,
            user: None,
            manifest_warnings,
            next_request_id: 1,
        };

        if let AddressingStrategy::ProxyServer { proxy_address } = experiment.strategy {
            let table = Rc::new(RefCell::new(ProxyRoutingTable::new()));
            experiment.sim.register_endpoint(
                proxy_address,
                &master_node_name,
                None,
                Box::new(ProxyComponent {
                    name: experiment.proxy_name.clone(),
                    address: proxy_address,
                    table: Rc::clone(&table),
                }),
            )?;
            experiment.proxy_table = Some(table);
        }

        for spec in &manifest_specs {
            for _ in 0..spec.replicas {
                experiment.deploy_pod(&spec.name)?;
            }
        }
        experiment.deploy_pod("fogbus2-user")?;
        Ok(experiment)
    }

    fn comms_mode(&self) -> CommsMode {
        match self.strategy {
            AddressingStrategy::ProxyServer { proxy_address } => CommsMode::Proxy {
                proxy: proxy_address,
            },
            _ => CommsMode::Direct,
        }
    }

    fn alloc_request_id(&mut self) -> u64 {
        let id = self.next_request_id;
        self.next_request_id += 1;
        id
    }

    /// Starts one pod of a deployment and brings its component online:
    /// endpoint registration, proxy-table registration, and (for actors)
    /// the registration round-trip with the master.
    fn deploy_pod(&mut self, deployment: &str) -> Result<u64, BenchError> {
        let now = self.sim.now_ms();
        let uid = self.cluster.start_pod(deployment, &self.strategy, now)?;
        self.bring_pod_online(uid)?;
        Ok(uid)
    }

    fn bring_pod_online(&mut self, uid: u64) -> Result<(), BenchError> {
        let pod = self.cluster.pod(uid).expect("pod just started").clone();
        let node = self
            .cluster
            .node(&pod.node)
            .expect("pod node exists")
            .clone();
        let spec = self
            .cluster
            .deployment(&pod.deployment)
            .expect("deployment exists")
            .clone();
        let role = role_of_image(&spec.image).ok_or_else(|| {
            BenchError::Deploy(format!(
                "image `{}` does not name a framework component",
                spec.image
            ))
        })?;
        let bind = pod.bind_address.expect("running pod is bound");
        let advertise = resolve_advertise(&self.strategy, &pod, &node);
        let logical_name = pod.deployment.clone();
        let comms = Comms {
            self_name: logical_name.clone(),
            advertise,
            mode: self.comms_mode(),
        };

        let component: Box<dyn Component> = match role {
            ComponentRole::RemoteLogger => {
                self.logger_target = Some(Target {
                    name: logical_name.clone(),
                    address: advertise,
                });
                Box::new(RemoteLoggerComponent {
                    name: logical_name.clone(),
                    store: Rc::clone(&self.log_store),
                })
            }
            ComponentRole::Master => {
                let logger = self.logger_target.clone().ok_or_else(|| {
                    BenchError::Deploy(
                        "the remote logger must be deployed before the master".to_string(),
                    )
                })?;
                self.master_target = Some(Target {
                    name: logical_name.clone(),
                    address: advertise,
                });
                Box::new(MasterComponent {
                    comms: comms.clone(),
                    logger,
                    scheduler: Rc::clone(&self.scheduler),
                })
            }
            ComponentRole::Actor => {
                let logger = self.logger_target.clone().ok_or_else(|| {
                    BenchError::Deploy(
                        "the remote logger must be deployed before actors".to_string(),
                    )
                })?;
                let stats = self
                    .actor_stats
                    .entry(logical_name.clone())
                    .or_insert_with(|| Rc::new(RefCell::new(ActorStats::default())));
                Box::new(ActorComponent {
                    comms: comms.clone(),
                    logger,
                    executors: BTreeMap::new(),
                    stats: Rc::clone(stats),
                })
            }
            ComponentRole::User => {
                let inbox = Rc::new(RefCell::new(UserInbox::default()));
                let timeout_ms = 10.0 * self.sim.latency_model().max_one_way_ms();
                self.user = Some(UserHandle {
                    comms: comms.clone(),
                    bind,
                    inbox: Rc::clone(&inbox),
                    timeout_ms,
                });
                Box::new(UserComponent {
                    name: logical_name.clone(),
                    inbox,
                })
            }
        };

        self.sim
            .register_endpoint(bind, &pod.node, Some(uid), component)?;
        if let Some(table) = &self.proxy_table {
            table
                .borrow_mut()
                .register(logical_name.clone(), bind, pod.node.clone());
        }
        if role == ComponentRole::Actor {
            let master = self.master_target.clone().ok_or_else(|| {
                BenchError::Deploy("the master must be deployed before actors".to_string())
            })?;
            let request_id = self.alloc_request_id();
            let register = comms.envelope(
                request_id,
                &master,
                PayloadBody::RegisterActor {
                    actor_name: logical_name,
                    actor_address: advertise,
                },
            );
            // delivery failures surface as an empty roster later; exactly
            // the runtime behavior under a broken pod network
            let _ = self.sim.send_from(bind, register)?;
            self.sim.run_until_idle();
        }
        Ok(())
    }

    /// Submits one calculation through the deployed stack and waits for
    /// the final result on the virtual clock. A run counts as successful
    /// only when the returned output equals the directly computed value.
    pub fn submit(&mut self, input: CalcInput) -> Result<RunOutcome, BenchError> {
        let user = self
            .user
            .clone()
            .ok_or_else(|| BenchError::Deploy("no user component deployed".to_string()))?;
        let master = self
            .master_target
            .clone()
            .ok_or_else(|| BenchError::Deploy("no master deployed".to_string()))?;
        let request_id = self.alloc_request_id();
        match user_submit(&mut self.sim, &user, request_id, input, &master) {
            Ok(submission) => {
                let expected = execute_calculation(&input).ok();
                let matches = expected == Some(submission.output);
                Ok(RunOutcome {
                    request_id,
                    success: matches,
                    latency_ms: Some(submission.response_time_ms),
                    failure_reason: (!matches).then(|| "incorrect_result".to_string()),
                    output: Some(submission.output),
                })
            }
            Err(SubmitError::Sim(e)) => Err(BenchError::Sim(e)),
            Err(err) => Ok(RunOutcome {
                request_id,
                success: false,
                latency_ms: None,
                failure_reason: Some(err.reason()),
                output: None,
            }),
        }
    }

    /// Kills the endpoint of one running pod of a deployment, marking the
    /// pod failed. Reconcile brings a replacement up.
    pub fn fail_deployment_pod(&mut self, deployment: &str) -> Result<u64, BenchError> {
        let pod = self
            .cluster
            .pods_of(deployment)
            .into_iter()
            .find(|p| p.bind_address.is_some())
            .ok_or_else(|| BenchError::Deploy(format!("no running pod of `{deployment}`")))?;
        let uid = pod.uid;
        let bind = pod.bind_address.expect("running pod is bound");
        self.sim.fail_endpoint(bind)?;
        let now = self.sim.now_ms();
        self.cluster.mark_failed(uid, now)?;
        Ok(uid)
    }

    /// Restarts failed always-restart pods and brings their components
    /// back online (including proxy re-registration and the actor's
    /// re-registration with the master).
    pub fn reconcile(&mut self) -> Result<Vec<RestartAction>, BenchError> {
        let now = self.sim.now_ms();
        let actions = self.cluster.reconcile(&self.strategy, now)?;
        for action in &actions {
            self.bring_pod_online(action.new_uid)?;
        }
        Ok(actions)
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn simulation_mut(&mut self) -> &mut Simulation {
        &mut self.sim
    }

    pub fn cluster(&self) -> &ClusterState {
        &self.cluster
    }

    pub fn strategy(&self) -> &AddressingStrategy {
        &self.strategy
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    /// The unextended mesh as built from the topology table.
    pub fn topology(&self) -> &MeshTopology {
        &self.topology
    }

    pub fn log_store(&self) -> Rc<RefCell<LogStore>> {
        Rc::clone(&self.log_store)
    }

    pub fn scheduler(&self) -> Rc<RefCell<SchedulerState>> {
        Rc::clone(&self.scheduler)
    }

    pub fn actor_stats(&self, logical_name: &str) -> Option<Rc<RefCell<ActorStats>>> {
        self.actor_stats.get(logical_name).map(Rc::clone)
    }

    pub fn proxy_table(&self) -> Option<Rc<RefCell<ProxyRoutingTable>>> {
        self.proxy_table.as_ref().map(Rc::clone)
    }

    pub fn master_target(&self) -> Option<&Target> {
        self.master_target.as_ref()
    }

    pub fn logger_target(&self) -> Option<&Target> {
        self.logger_target.as_ref()
    }

    pub fn user_handle(&self) -> Option<&UserHandle> {
        self.user.as_ref()
    }

    pub fn manifest_warnings(&self) -> &[String] {
        &self.manifest_warnings
    }
}
