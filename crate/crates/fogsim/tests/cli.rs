//! CLI behavior: subcommand output, exit codes, file emission.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn fogsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fogsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

#[test]
fn mesh_validate_reports_all_pairs() {
    let topo = data_path("topology.tsv");
    let out = fogsim(&[
        "mesh",
        "validate",
        "--topology",
        topo.to_str().expect("utf8"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(
        stdout(&out).contains("20/20 pairs routable"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn mesh_route_prints_peer_endpoint() {
    let topo = data_path("topology.tsv");
    let out = fogsim(&[
        "mesh",
        "route",
        "--topology",
        topo.to_str().expect("utf8"),
        "--from",
        "worker04",
        "--dst",
        "192.0.0.1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("45.113.235.156:4999"), "{text}");
    assert!(text.contains("master"), "{text}");
}

#[test]
fn mesh_route_unroutable_exits_one() {
    let topo = data_path("topology.tsv");
    let out = fogsim(&[
        "mesh",
        "route",
        "--topology",
        topo.to_str().expect("utf8"),
        "--from",
        "worker04",
        "--dst",
        "10.42.1.7",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("unroutable"));
}

#[test]
fn mesh_generate_writes_one_config_per_node() {
    let topo = data_path("topology.tsv");
    let dir = tempfile::tempdir().expect("tempdir");
    let out = fogsim(&[
        "mesh",
        "generate",
        "--topology",
        topo.to_str().expect("utf8"),
        "--out",
        dir.path().to_str().expect("utf8"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    for node in ["master", "worker01", "worker02", "worker03", "worker04"] {
        let path = dir.path().join(format!("{node}.conf"));
        assert!(path.exists(), "missing {node}.conf");
    }
    let worker04 = std::fs::read_to_string(dir.path().join("worker04.conf")).expect("readable");
    assert!(worker04.contains("Address = 192.0.0.5/24"));
    assert!(worker04.contains("Endpoint = 192.168.0.40:4999"));
    assert!(worker04.contains("PersistentKeepalive = 15"));
}

#[test]
fn bench_run_zero_repetitions_is_a_config_error() {
    let cfg = data_path("bench.conf");
    let out = fogsim(&[
        "bench",
        "run",
        "-c",
        cfg.to_str().expect("utf8"),
        "--repetitions",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_run_writes_csv_with_header() {
    let cfg = data_path("bench.conf");
    let dir = tempfile::tempdir().expect("tempdir");
    let csv_path = dir.path().join("samples.csv");
    let out = fogsim(&[
        "bench",
        "run",
        "-c",
        cfg.to_str().expect("utf8"),
        "--repetitions",
        "3",
        "--csv",
        csv_path.to_str().expect("utf8"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let csv = std::fs::read_to_string(&csv_path).expect("csv written");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("run,strategy,latency_ms,success,failure_reason")
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn bench_run_env_without_extension_exits_two() {
    let cfg = data_path("bench.conf");
    let out = fogsim(&[
        "bench",
        "run",
        "-c",
        cfg.to_str().expect("utf8"),
        "--strategy",
        "env",
    ]);
    assert_eq!(out.status.code(), Some(2), "zero successful runs");
    assert!(stdout(&out).contains("unroutable"));
}

#[test]
fn bench_compare_prints_all_variants() {
    let cfg = data_path("bench.conf");
    let out = fogsim(&[
        "bench",
        "compare",
        "-c",
        cfg.to_str().expect("utf8"),
        "--strategies",
        "native,host,env+s2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("native"));
    assert!(text.contains("host_network"));
    assert!(text.contains("env_variable+solution2"));
}

#[test]
fn bench_compare_csv_collects_all_rows() {
    let cfg = data_path("bench.conf");
    let dir = tempfile::tempdir().expect("tempdir");
    let csv_path = dir.path().join("compare.csv");
    let out = fogsim(&[
        "bench",
        "compare",
        "-c",
        cfg.to_str().expect("utf8"),
        "--strategies",
        "native,host",
        "--csv",
        csv_path.to_str().expect("utf8"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(&csv_path).expect("csv written");
    // header + 10 native rows + 10 host rows
    assert_eq!(csv.lines().count(), 21);
    assert!(csv.contains(",native,"));
    assert!(csv.contains(",host_network,"));
}

#[test]
fn bench_run_exports_trace_and_logs() {
    let cfg = data_path("bench.conf");
    let dir = tempfile::tempdir().expect("tempdir");
    let trace_path = dir.path().join("trace.ldjson");
    let logs_path = dir.path().join("logs.ldjson");
    let out = fogsim(&[
        "bench",
        "run",
        "-c",
        cfg.to_str().expect("utf8"),
        "--repetitions",
        "2",
        "--trace",
        trace_path.to_str().expect("utf8"),
        "--logs",
        logs_path.to_str().expect("utf8"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    for path in [&trace_path, &logs_path] {
        let text = std::fs::read_to_string(path).expect("export written");
        assert!(!text.is_empty());
        for line in text.lines() {
            let _: serde_json::Value = serde_json::from_str(line).expect("valid json line");
        }
    }
}

#[test]
fn unknown_flags_exit_two() {
    let out = fogsim(&["mesh", "validate", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_files_exit_two() {
    let out = fogsim(&["mesh", "validate", "--topology", "/nonexistent/topo.tsv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fogsim(&["bench", "run", "-c", "/nonexistent/bench.conf"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cluster_apply_lists_pods_and_warnings() {
    let topo = data_path("topology.tsv");
    let logger = data_path("manifests/fogbus2-remote-logger.yaml");
    let master = data_path("manifests/fogbus2-master.yaml");
    let out = fogsim(&[
        "cluster",
        "apply",
        "-f",
        logger.to_str().expect("utf8"),
        "-f",
        master.to_str().expect("utf8"),
        "--topology",
        topo.to_str().expect("utf8"),
        "--strategy",
        "host",
        "--events",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("fogbus2-master"), "{text}");
    assert!(text.contains("Running"), "{text}");
    assert!(text.contains("192.0.0.1"), "{text}");
    assert!(text.contains("\"action\":\"started\""), "{text}");
    let warnings = String::from_utf8_lossy(&out.stderr);
    assert!(warnings.contains("annotations"), "{warnings}");
}
