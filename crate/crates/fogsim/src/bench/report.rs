//! Benchmark reports: per-run samples, summary statistics, CSV emission,
//! and the controlled comparison across addressing strategies.

use std::fmt;
use std::io::Write;

use crate::bench::config::ExperimentConfig;
use crate::bench::harness::Experiment;
use crate::bench::BenchError;
use crate::stats::{summarize, Stats};

pub const CSV_HEADER: &str = "run,strategy,latency_ms,success,failure_reason";

/// One benchmark run as it appears in the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub run: u32,
    pub strategy: String,
    pub latency_ms: Option<f64>,
    pub success: bool,
    pub failure_reason: Option<String>,
}

/// Results of one experiment: all samples plus statistics over the
/// successful runs.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub label: String,
    pub samples: Vec<Sample>,
    pub success_count: usize,
    pub stats: Option<Stats>,
}

impl BenchReport {
    pub fn from_samples(label: String, samples: Vec<Sample>) -> Self {
        let successes: Vec<f64> = samples
            .iter()
            .filter(|s| s.success)
            .filter_map(|s| s.latency_ms)
            .collect();
        Self {
            label,
            success_count: successes.len(),
            stats: summarize(&successes),
            samples,
        }
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{}",
                s.run,
                s.strategy,
                s.latency_ms.map(|v| format!("{v:.3}")).unwrap_or_default(),
                s.success,
                s.failure_reason.as_deref().unwrap_or_default()
            )?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<24} {:>4} {:>4} {:>9} {:>9} {:>9} {:>9}",
            "strategy", "runs", "ok", "min_ms", "mean_ms", "max_ms", "stddev_ms"
        )?;
        write_row(
            f,
            &self.label,
            self.samples.len(),
            self.success_count,
            self.stats,
        )?;
        for s in self.samples.iter().filter(|s| !s.success) {
            writeln!(
                f,
                "  run {}: failed ({})",
                s.run,
                s.failure_reason.as_deref().unwrap_or("unknown")
            )?;
        }
        Ok(())
    }
}

fn write_row(
    f: &mut fmt::Formatter<'_>,
    label: &str,
    runs: usize,
    ok: usize,
    stats: Option<Stats>,
) -> fmt::Result {
    match stats {
        Some(st) => writeln!(
            f,
            "{label:<24} {runs:>4} {ok:>4} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            st.min, st.mean, st.max, st.stddev
        ),
        None => writeln!(
            f,
            "{label:<24} {runs:>4} {ok:>4} {:>9} {:>9} {:>9} {:>9}",
            "-", "-", "-", "-"
        ),
    }
}

/// Builds the experiment described by `cfg` and runs its submissions.
/// Failed runs are recorded with their reasons rather than erroring out,
/// so broken addressing configurations still produce a report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<BenchReport, BenchError> {
    let mut experiment = Experiment::build(cfg)?;
    let report = run_on(&mut experiment, cfg)?;
    Ok(report)
}

/// Like [`run_experiment`] but returns the experiment too, for callers
/// that inspect the trace or cluster afterwards.
pub fn run_experiment_keep(
    cfg: &ExperimentConfig,
) -> Result<(BenchReport, Experiment), BenchError> {
    let mut experiment = Experiment::build(cfg)?;
    let report = run_on(&mut experiment, cfg)?;
    Ok((report, experiment))
}

fn run_on(experiment: &mut Experiment, cfg: &ExperimentConfig) -> Result<BenchReport, BenchError> {
    let label = cfg.label();
    let mut samples = Vec::with_capacity(cfg.repetitions as usize);
    for run in 0..cfg.repetitions {
        let input = cfg.inputs[run as usize % cfg.inputs.len()];
        let outcome = experiment.submit(input)?;
        samples.push(Sample {
            run,
            strategy: label.clone(),
            latency_ms: outcome.latency_ms,
            success: outcome.success,
            failure_reason: outcome.failure_reason,
        });
    }
    Ok(BenchReport::from_samples(label, samples))
}

/// Aligned comparison across strategy variants of one base configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub reports: Vec<BenchReport>,
}

impl Comparison {
    pub fn csv_string(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for report in &self.reports {
            for line in report.csv_string().lines().skip(1) {
                out.push_str(line);
                out.push('\n');
            }
        }
        out
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<24} {:>4} {:>4} {:>9} {:>9} {:>9} {:>9} {:>12}",
            "strategy", "runs", "ok", "min_ms", "mean_ms", "max_ms", "stddev_ms", "success_rate"
        )?;
        for r in &self.reports {
            let rate = if r.samples.is_empty() {
                0.0
            } else {
                r.success_count as f64 / r.samples.len() as f64
            };
            match r.stats {
                Some(st) => writeln!(
                    f,
                    "{:<24} {:>4} {:>4} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>11.0}%",
                    r.label,
                    r.samples.len(),
                    r.success_count,
                    st.min,
                    st.mean,
                    st.max,
                    st.stddev,
                    rate * 100.0
                )?,
                None => writeln!(
                    f,
                    "{:<24} {:>4} {:>4} {:>9} {:>9} {:>9} {:>9} {:>11.0}%",
                    r.label,
                    r.samples.len(),
                    r.success_count,
                    "-",
                    "-",
                    "-",
                    "-",
                    rate * 100.0
                )?,
            }
        }
        Ok(())
    }
}

/// Runs each configuration and lines the results up. Refused unless the
/// configs differ only in their strategy knobs (strategy, solution2,
/// native), so the comparison stays controlled.
pub fn compare_strategies(cfgs: &[ExperimentConfig]) -> Result<Comparison, BenchError> {
    if cfgs.len() < 2 {
        return Err(BenchError::NeedTwoConfigs);
    }
    let base = cfgs[0].base_fingerprint();
    for cfg in &cfgs[1..] {
        let fp = cfg.base_fingerprint();
        if fp != base {
            return Err(BenchError::UncontrolledComparison(format!(
                "expected {base}, got {fp}"
            )));
        }
    }
    let mut reports = Vec::with_capacity(cfgs.len());
    for cfg in cfgs {
        reports.push(run_experiment(cfg)?);
    }
    Ok(Comparison { reports })
}

/// Re-derives per-strategy successful latencies from CSV text, for
/// integrity checks against the in-memory report.
pub fn latencies_from_csv(text: &str) -> Result<Vec<(String, Vec<f64>)>, BenchError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| BenchError::Csv("empty csv".to_string()))?;
    if header != CSV_HEADER {
        return Err(BenchError::Csv(format!("unexpected header `{header}`")));
    }
    let mut per_strategy: Vec<(String, Vec<f64>)> = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(BenchError::Csv(format!(
                "row {}: expected 5 columns, got {}",
                idx + 2,
                cols.len()
            )));
        }
        if cols[3] != "true" {
            continue;
        }
        let latency: f64 = cols[2]
            .parse()
            .map_err(|_| BenchError::Csv(format!("row {}: bad latency `{}`", idx + 2, cols[2])))?;
        match per_strategy.iter_mut().find(|(s, _)| s == cols[1]) {
            Some((_, v)) => v.push(latency),
            None => per_strategy.push((cols[1].to_string(), vec![latency])),
        }
    }
    Ok(per_strategy)
}
