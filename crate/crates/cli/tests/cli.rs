use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_star-isac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str =
    r#"{"n_tx": 3, "n_rx": 3, "n_user_antennas": 2, "n_ris_elements": 8, "n_users": 2, "n_targets": 1}"#;

#[test]
fn solve_prints_summary_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "c.json", SMALL);
    let trace = dir.path().join("trace.csv");
    let out = run(&[
        "solve",
        "--config",
        &config,
        "--variant",
        "cris",
        "--seed",
        "3",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["variant"], "cris");
    assert_eq!(summary["seed"], 3);
    let nats = summary["assr_nats"].as_f64().unwrap();
    let bits = summary["assr_bits"].as_f64().unwrap();
    assert!((bits - nats / std::f64::consts::LN_2).abs() < 1e-12 * nats.abs().max(1.0));
    let text = std::fs::read_to_string(trace).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "iter,augmented,true,min_residual,branch_J,branch_theta,rho,outer"
    );
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_field = write(dir.path(), "a.json", r#"{"n_antennas": 3}"#);
    let zero = write(dir.path(), "b.json", r#"{"n_tx": 0}"#);
    let bad_solver = write(dir.path(), "c.json", r#"{"solver": {"zeta": 2.0}}"#);
    for path in [
        bad_field.as_str(),
        zero.as_str(),
        bad_solver.as_str(),
        "/nonexistent/config.json",
    ] {
        let out = run(&["solve", "--config", path]);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{path}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let plan = write(
        dir.path(),
        "p.json",
        r#"{"sweep_axis": "p_max_dbm", "variants": ["star"]}"#,
    );
    let out = run(&["sweep", "--plan", &plan, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn iteration_cap_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace(
        '}',
        r#", "solver": {"max_inner_iterations": 2, "max_outer_iterations": 1}}"#,
    );
    let config = write(dir.path(), "c.json", &text);
    let out = run(&["solve", "--config", &config]);
    assert_eq!(out.status.code(), Some(3));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["converged"], false);
}

#[test]
fn sweep_writes_results_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(
        dir.path(),
        "p.json",
        r#"{"sweep_axis": "n_ris_elements", "sweep_values": [4, 8], "n_realizations": 2,
            "variants": ["star", "noris"], "base": {"n_tx": 3, "n_rx": 3}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&[
        "sweep",
        "--plan",
        &plan,
        "--out",
        out_dir.to_str().unwrap(),
        "--workers",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let results = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let mut lines = results.lines();
    assert_eq!(
        lines.next().unwrap(),
        "variant,sweep_axis,sweep_value,seed,assr_nats,assr_bits,min_sensing_rate,converged,iterations,wall_ms"
    );
    assert_eq!(lines.count(), 8);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["groups"].as_array().unwrap().len(), 4);
}

#[test]
fn empty_variant_sweep_succeeds_with_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "p.json", r#"{"sweep_axis": "none", "variants": []}"#);
    let out = run(&["sweep", "--plan", &plan, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1);
}

#[test]
fn bench_reports_absent_slope_for_one_size() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.json");
    let out = run(&[
        "bench",
        "--ns",
        "32",
        "--out",
        path.to_str().unwrap(),
        "--iterations",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert!(table["slope"].is_null());
    assert_eq!(table["points"].as_array().unwrap().len(), 1);
}

#[test]
fn check_suites_pass() {
    let out = run(&["check"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 5);
}
