//! Command-line interface: mesh generation/validation/route queries,
//! cluster deployment, and the response-time benchmark.
//!
//! Exit codes: 0 on success, 1 when validation reports findings, 2 on
//! execution errors.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fogsim::addr::Cidr;
use fogsim::bench::{
    compare_strategies, run_experiment_keep, Experiment, ExperimentConfig, StrategyChoice,
};
use fogsim::mesh::{
    build_full_mesh, parse_node_table, render_node_config_labeled, resolve_route,
    validate_full_mesh, MeshTopology, NodeSpec, RouteDecision, DEFAULT_LISTEN_PORT,
};
use fogsim::netsim::LatencyModel;

#[derive(Parser)]
#[command(
    name = "fogsim",
    about = "Simulated hybrid cloud/edge testbed: mesh overlay, mini control plane, and addressing-strategy benchmark",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh overlay configs: generate, validate, or resolve routes.
    Mesh {
        #[command(subcommand)]
        command: MeshCommand,
    },
    /// Cluster operations on the simulated control plane.
    Cluster {
        #[command(subcommand)]
        command: ClusterCommand,
    },
    /// Response-time benchmark across addressing strategies.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Args)]
struct TopologyArgs {
    /// Node table file (tag, name, layer, public_endpoint, lan_endpoint, private_ip).
    #[arg(long)]
    topology: PathBuf,
    /// Overlay subnet.
    #[arg(long, default_value = "192.0.0.0/24")]
    vpn_cidr: Cidr,
    /// UDP listen port written into every config.
    #[arg(long, default_value_t = DEFAULT_LISTEN_PORT)]
    listen_port: u16,
}

impl TopologyArgs {
    fn load(&self) -> Result<(Vec<NodeSpec>, MeshTopology), String> {
        let text = std::fs::read_to_string(&self.topology)
            .map_err(|e| format!("{}: {e}", self.topology.display()))?;
        let nodes = parse_node_table(&text, self.listen_port).map_err(|e| e.to_string())?;
        let topology =
            build_full_mesh(&nodes, self.vpn_cidr, self.listen_port).map_err(|e| e.to_string())?;
        Ok((nodes, topology))
    }
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Generate per-node tunnel configs for the full mesh.
    Generate {
        #[command(flatten)]
        topology: TopologyArgs,
        /// Write one <node>.conf per node into this directory instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check all-pairs reachability, peer symmetry, and route uniqueness.
    Validate {
        #[command(flatten)]
        topology: TopologyArgs,
    },
    /// Resolve where a destination address routes from one node.
    Route {
        #[command(flatten)]
        topology: TopologyArgs,
        /// Source node (tag or name).
        #[arg(long)]
        from: String,
        /// Destination IPv4 address.
        #[arg(long)]
        dst: std::net::Ipv4Addr,
    },
}

#[derive(Subcommand)]
enum ClusterCommand {
    /// Apply deployment manifests and print the resulting pods.
    Apply {
        /// Manifest files (repeatable).
        #[arg(short = 'f', long = "filename", required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        topology: PathBuf,
        /// Addressing strategy: host, proxy, or env.
        #[arg(long, default_value = "host")]
        strategy: String,
        /// Extend the VPN allowed ranges with the per-node pod subnets.
        #[arg(long)]
        enable_solution2: bool,
        /// Node hosting the user component.
        #[arg(long, default_value = "worker04")]
        user_node: String,
        /// Print the cluster event log as line-delimited JSON.
        #[arg(long)]
        events: bool,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run the benchmark described by an experiment config file.
    Run {
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
        /// Write per-run samples as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Override the configured strategy (host, proxy, env).
        #[arg(long)]
        strategy: Option<String>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured repetitions.
        #[arg(long)]
        repetitions: Option<u32>,
        /// Enable the allowed-ranges extension.
        #[arg(long)]
        enable_solution2: bool,
        /// Native baseline: no cluster overlay overhead.
        #[arg(long)]
        native: bool,
        /// Override the latency model file.
        #[arg(long)]
        latency: Option<PathBuf>,
        /// Override the same-node one-way latency (ms).
        #[arg(long)]
        same_node_ms: Option<f64>,
        /// Override both VPN link classes' one-way latency (ms).
        #[arg(long)]
        vpn_ms: Option<f64>,
        /// Override the per-hop cluster overlay overhead (ms).
        #[arg(long)]
        overlay_extra_ms: Option<f64>,
        /// Override the uniform jitter half-width (ms).
        #[arg(long)]
        jitter_ms: Option<f64>,
        /// Pace deliveries against the real clock (demonstration mode).
        #[arg(long)]
        wall_clock: bool,
        /// Export the hop-level trace as line-delimited JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Export the remote logger's store as line-delimited JSON.
        #[arg(long)]
        logs: Option<PathBuf>,
    },
    /// Run several strategy variants of one config and compare them.
    Compare {
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
        /// Comma-separated variants: native, host, proxy, env, env+s2.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "native,host,env,env+s2,proxy"
        )]
        strategies: Vec<String>,
        /// Write all samples as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    // die quietly on a closed pipe like the rest of the unix toolbox
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Mesh { command } => mesh_command(command),
        Command::Cluster { command } => cluster_command(command),
        Command::Bench { command } => bench_command(command),
    }
}

fn mesh_command(command: MeshCommand) -> Result<ExitCode, String> {
    match command {
        MeshCommand::Generate { topology, out } => {
            let (nodes, topo) = topology.load()?;
            let names: BTreeMap<String, String> = nodes
                .iter()
                .map(|n| (n.tag.clone(), n.name.clone()))
                .collect();
            for node in &nodes {
                let text = render_node_config_labeled(&topo, &node.tag, &names)
                    .expect("config exists for every node");
                match &out {
                    Some(dir) => {
                        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
                        let path = dir.join(format!("{}.conf", node.name));
                        std::fs::write(&path, text).map_err(|e| e.to_string())?;
                        println!("wrote {}", path.display());
                    }
                    None => println!("{text}"),
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        MeshCommand::Validate { topology } => {
            let (_, topo) = topology.load()?;
            let report = validate_full_mesh(&topo);
            print!("{report}");
            if report.ok() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        MeshCommand::Route {
            topology,
            from,
            dst,
        } => {
            let (nodes, topo) = topology.load()?;
            let tag = nodes
                .iter()
                .find(|n| n.tag == from || n.name == from)
                .map(|n| n.tag.clone())
                .ok_or_else(|| format!("unknown node `{from}`"))?;
            let cfg = &topo.configs[&tag];
            match resolve_route(cfg, dst) {
                RouteDecision::Local => {
                    println!("local");
                    Ok(ExitCode::SUCCESS)
                }
                RouteDecision::Via {
                    peer_index,
                    public_key,
                    endpoint,
                } => {
                    let peer_name = topo
                        .peer_node(&tag, peer_index)
                        .and_then(|peer_tag| {
                            nodes
                                .iter()
                                .find(|n| n.tag == peer_tag)
                                .map(|n| n.name.clone())
                        })
                        .unwrap_or(public_key);
                    match endpoint {
                        Some(ep) => println!("via peer \"{peer_name}\" at {ep}"),
                        None => println!(
                            "via peer \"{peer_name}\" (no endpoint, reached via keepalive)"
                        ),
                    }
                    Ok(ExitCode::SUCCESS)
                }
                RouteDecision::Unroutable => {
                    println!("unroutable");
                    Ok(ExitCode::from(1))
                }
            }
        }
    }
}

fn cluster_command(command: ClusterCommand) -> Result<ExitCode, String> {
    let ClusterCommand::Apply {
        files,
        topology,
        strategy,
        enable_solution2,
        user_node,
        events,
    } = command;
    let mut cfg = ExperimentConfig::defaults();
    cfg.topology_file = topology;
    cfg.manifest_files = files;
    cfg.strategy = StrategyChoice::parse(&strategy).map_err(|e| e.to_string())?;
    cfg.solution2 = enable_solution2;
    cfg.user_node = user_node;
    let experiment = Experiment::build(&cfg).map_err(|e| e.to_string())?;
    for warning in experiment.manifest_warnings() {
        eprintln!("warning: {warning}");
    }
    println!(
        "{:<28} {:>7} {:>10} {:>9} {:<16} {:<10}",
        "NAME", "READY", "STATUS", "RESTARTS", "IP", "NODE"
    );
    for pod in experiment.cluster().pods() {
        println!(
            "{:<28} {:>7} {:>10} {:>9} {:<16} {:<10}",
            format!("{}-{}", pod.deployment, pod.uid),
            "1/1",
            format!("{:?}", pod.phase),
            pod.restart_count,
            pod.pod_ip.to_string(),
            pod.node
        );
    }
    if events {
        let mut buf = Vec::new();
        experiment
            .cluster()
            .export_events_ldjson(&mut buf)
            .map_err(|e| e.to_string())?;
        print!("{}", String::from_utf8_lossy(&buf));
    }
    Ok(ExitCode::SUCCESS)
}

fn bench_command(command: BenchCommand) -> Result<ExitCode, String> {
    match command {
        BenchCommand::Run {
            config,
            csv,
            strategy,
            seed,
            repetitions,
            enable_solution2,
            native,
            latency,
            same_node_ms,
            vpn_ms,
            overlay_extra_ms,
            jitter_ms,
            wall_clock,
            trace,
            logs,
        } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(|e| e.to_string())?;
            if let Some(s) = strategy {
                cfg.strategy = StrategyChoice::parse(&s).map_err(|e| e.to_string())?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = repetitions {
                cfg.repetitions = r;
            }
            if enable_solution2 {
                cfg.solution2 = true;
            }
            if native {
                cfg.native = true;
            }
            if let Some(l) = latency {
                cfg.latency_file = Some(l);
            }
            if same_node_ms.is_some()
                || vpn_ms.is_some()
                || overlay_extra_ms.is_some()
                || jitter_ms.is_some()
            {
                let mut model = match &cfg.latency_file {
                    Some(path) => {
                        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
                        LatencyModel::parse(&text).map_err(|e| e.to_string())?
                    }
                    None => LatencyModel::default(),
                };
                if let Some(v) = same_node_ms {
                    model.same_node_ms = v;
                }
                if let Some(v) = vpn_ms {
                    model.vpn_cloud_cloud_ms = v;
                    model.vpn_cloud_edge_ms = v;
                }
                if let Some(v) = overlay_extra_ms {
                    model.cluster_overlay_extra_ms = v;
                }
                if let Some(v) = jitter_ms {
                    model.jitter_ms = v;
                }
                cfg.latency_model = Some(model);
            }
            if wall_clock {
                cfg.wall_clock = true;
            }
            cfg.validate().map_err(|e| e.to_string())?;
            let (report, experiment) = run_experiment_keep(&cfg).map_err(|e| e.to_string())?;
            print!("{report}");
            if let Some(path) = csv {
                let mut file = std::fs::File::create(&path).map_err(|e| e.to_string())?;
                report.write_csv(&mut file).map_err(|e| e.to_string())?;
                println!("samples written to {}", path.display());
            }
            if let Some(path) = trace {
                let mut file = std::fs::File::create(&path).map_err(|e| e.to_string())?;
                experiment
                    .simulation()
                    .export_trace_ldjson(&mut file)
                    .map_err(|e| e.to_string())?;
                println!("trace written to {}", path.display());
            }
            if let Some(path) = logs {
                let mut file = std::fs::File::create(&path).map_err(|e| e.to_string())?;
                experiment
                    .log_store()
                    .borrow()
                    .export_ldjson(&mut file)
                    .map_err(|e| e.to_string())?;
                println!("logs written to {}", path.display());
            }
            if report.success_count == 0 {
                eprintln!("error: zero successful runs");
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        BenchCommand::Compare {
            config,
            strategies,
            csv,
        } => {
            let base = ExperimentConfig::load(&config).map_err(|e| e.to_string())?;
            let mut cfgs = Vec::new();
            for variant in &strategies {
                let cfg = match variant.as_str() {
                    "native" => base.with_strategy(StrategyChoice::Host, false, true),
                    "host" => base.with_strategy(StrategyChoice::Host, false, false),
                    "proxy" => base.with_strategy(StrategyChoice::Proxy, false, false),
                    "env" => base.with_strategy(StrategyChoice::Env, false, false),
                    "env+s2" | "env+solution2" => {
                        base.with_strategy(StrategyChoice::Env, true, false)
                    }
                    other => return Err(format!("unknown strategy variant `{other}`")),
                };
                cfgs.push(cfg);
            }
            let comparison = compare_strategies(&cfgs).map_err(|e| e.to_string())?;
            print!("{comparison}");
            if let Some(path) = csv {
                std::fs::write(&path, comparison.csv_string()).map_err(|e| e.to_string())?;
                println!("samples written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
