//! Experiment configuration: a `key = value` text file naming the topology
//! table, the deployment manifests, the addressing strategy and its knobs,
//! and the benchmark parameters.

use std::path::{Path, PathBuf};

use crate::addr::Cidr;
use crate::bench::BenchError;
use crate::fogbus::calc::CalcInput;
use crate::mesh::DEFAULT_LISTEN_PORT;
use crate::netsim::LatencyModel;

/// Which addressing pattern an experiment runs under. The proxy address is
/// derived at build time (master node, configured proxy port).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyChoice {
    Host,
    Proxy,
    Env,
}

impl StrategyChoice {
    pub fn parse(s: &str) -> Result<Self, BenchError> {
        match s {
            "host" | "host_network" => Ok(StrategyChoice::Host),
            "proxy" | "proxy_server" => Ok(StrategyChoice::Proxy),
            "env" | "env_variable" => Ok(StrategyChoice::Env),
            other => Err(BenchError::Config(format!(
                "unknown strategy `{other}` (expected host, proxy, or env)"
            ))),
        }
    }
}

/// Everything one experiment run needs. `native` disables the cluster
/// overlay overhead and models the framework running directly on the hosts
/// (host addressing, no orchestration cost).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub topology_file: PathBuf,
    pub manifest_files: Vec<PathBuf>,
    pub strategy: StrategyChoice,
    pub solution2: bool,
    pub native: bool,
    pub repetitions: u32,
    pub inputs: Vec<CalcInput>,
    pub seed: u64,
    pub latency_file: Option<PathBuf>,
    /// Fully resolved model; overrides `latency_file` when set (CLI flag
    /// overrides land here).
    pub latency_model: Option<LatencyModel>,
    /// Pace deliveries against the real clock for demonstration runs;
    /// virtual time stays authoritative for all measurements.
    pub wall_clock: bool,
    pub user_node: String,
    pub vpn_cidr: Cidr,
    pub pod_cidr: Cidr,
    pub listen_port: u16,
    pub proxy_port: u16,
}

/// The ten input tuples submitted by default, all away from the
/// singularities of the calculation.
pub fn default_inputs() -> Vec<CalcInput> {
    [
        (1.0, 1.0, 1.0),
        (2.0, 3.0, 4.0),
        (5.0, 6.0, 7.0),
        (8.0, 9.0, 10.0),
        (1.0, 2.0, 3.0),
        (4.0, 5.0, 6.0),
        (7.0, 8.0, 9.0),
        (10.0, 11.0, 12.0),
        (2.0, 2.0, 2.0),
        (3.0, 3.0, 3.0),
    ]
    .iter()
    .map(|&(a, b, c)| CalcInput::new(a, b, c))
    .collect()
}

impl ExperimentConfig {
    /// A config with every knob at its default; topology and manifests
    /// still need to be set.
    pub fn defaults() -> Self {
        Self {
            topology_file: PathBuf::new(),
            manifest_files: Vec::new(),
            strategy: StrategyChoice::Host,
            solution2: false,
            native: false,
            repetitions: 10,
            inputs: default_inputs(),
            seed: 42,
            latency_file: None,
            latency_model: None,
            wall_clock: false,
            user_node: "worker04".to_string(),
            vpn_cidr: "192.0.0.0/24".parse().expect("default cidr"),
            pod_cidr: "10.42.0.0/16".parse().expect("default cidr"),
            listen_port: DEFAULT_LISTEN_PORT,
            proxy_port: 6000,
        }
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses `key = value` lines; relative paths resolve against
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, BenchError> {
        let mut cfg = Self::defaults();
        let resolve = |s: &str| -> PathBuf {
            let p = PathBuf::from(s);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                BenchError::Config(format!("line {}: expected key = value", idx + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |msg: String| BenchError::Config(format!("line {}: {msg}", idx + 1));
            match key {
                "topology" => cfg.topology_file = resolve(value),
                "manifests" => {
                    cfg.manifest_files = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(resolve)
                        .collect();
                }
                "strategy" => cfg.strategy = StrategyChoice::parse(value)?,
                "solution2" => cfg.solution2 = parse_bool(value).map_err(bad)?,
                "native" => cfg.native = parse_bool(value).map_err(bad)?,
                "repetitions" => {
                    cfg.repetitions = value
                        .parse()
                        .map_err(|_| bad(format!("invalid repetitions `{value}`")))?;
                }
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| bad(format!("invalid seed `{value}`")))?;
                }
                "inputs" => cfg.inputs = parse_inputs(value).map_err(bad)?,
                "latency" => cfg.latency_file = Some(resolve(value)),
                "wall_clock" => cfg.wall_clock = parse_bool(value).map_err(bad)?,
                "user_node" => cfg.user_node = value.to_string(),
                "vpn_cidr" => {
                    cfg.vpn_cidr = value
                        .parse()
                        .map_err(|_| bad(format!("invalid vpn_cidr `{value}`")))?;
                }
                "pod_cidr" => {
                    cfg.pod_cidr = value
                        .parse()
                        .map_err(|_| bad(format!("invalid pod_cidr `{value}`")))?;
                }
                "listen_port" => {
                    cfg.listen_port = value
                        .parse()
                        .map_err(|_| bad(format!("invalid listen_port `{value}`")))?;
                }
                "proxy_port" => {
                    cfg.proxy_port = value
                        .parse()
                        .map_err(|_| bad(format!("invalid proxy_port `{value}`")))?;
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.repetitions < 1 {
            return Err(BenchError::Config("repetitions must be >= 1".to_string()));
        }
        if self.inputs.is_empty() {
            return Err(BenchError::Config("inputs must not be empty".to_string()));
        }
        if self.topology_file.as_os_str().is_empty() {
            return Err(BenchError::Config("topology file not set".to_string()));
        }
        if self.manifest_files.is_empty() {
            return Err(BenchError::Config("no manifest files".to_string()));
        }
        if self.native && self.strategy != StrategyChoice::Host {
            return Err(BenchError::Config(
                "native mode runs on the hosts directly and implies the host strategy".to_string(),
            ));
        }
        if self.pod_cidr.overlaps(&self.vpn_cidr) {
            return Err(BenchError::Config(
                "pod_cidr must not overlap vpn_cidr".to_string(),
            ));
        }
        Ok(())
    }

    /// Row label used in reports and CSV.
    pub fn label(&self) -> String {
        if self.native {
            return "native".to_string();
        }
        let base = match self.strategy {
            StrategyChoice::Host => "host_network",
            StrategyChoice::Proxy => "proxy_server",
            StrategyChoice::Env => "env_variable",
        };
        if self.solution2 {
            format!("{base}+solution2")
        } else {
            base.to_string()
        }
    }

    /// Everything except the strategy knobs; comparisons must agree here.
    pub fn base_fingerprint(&self) -> String {
        format!(
            "topology={:?} manifests={:?} reps={} seed={} inputs={:?} latency={:?} model={:?} user_node={} vpn={} pod={} listen={} proxy_port={}",
            self.topology_file,
            self.manifest_files,
            self.repetitions,
            self.seed,
            self.inputs
                .iter()
                .map(|i| (i.a, i.b, i.c))
                .collect::<Vec<_>>(),
            self.latency_file,
            self.latency_model,
            self.user_node,
            self.vpn_cidr,
            self.pod_cidr,
            self.listen_port,
            self.proxy_port,
        )
    }

    /// Derives a variant differing only in strategy knobs.
    pub fn with_strategy(&self, strategy: StrategyChoice, solution2: bool, native: bool) -> Self {
        let mut cfg = self.clone();
        cfg.strategy = strategy;
        cfg.solution2 = solution2;
        cfg.native = native;
        cfg
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(format!("invalid boolean `{other}`")),
    }
}

fn parse_inputs(s: &str) -> Result<Vec<CalcInput>, String> {
    let mut inputs = Vec::new();
    for triple in s.split(';') {
        let triple = triple.trim();
        if triple.is_empty() {
            continue;
        }
        let parts: Vec<&str> = triple.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("input `{triple}` is not a comma-separated triple"));
        }
        let num = |p: &str| {
            p.parse::<f64>()
                .map_err(|_| format!("invalid number `{p}`"))
        };
        inputs.push(CalcInput::new(
            num(parts[0])?,
            num(parts[1])?,
            num(parts[2])?,
        ));
    }
    if inputs.is_empty() {
        return Err("no inputs given".to_string());
    }
    Ok(inputs)
}
