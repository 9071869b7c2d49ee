//! End-to-end tests of the binary: exit codes, output files, validation
//! messages and byte-level reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bitectl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bitectl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn basic_config() -> &'static str {
    r#"{
        "a_max": 2.0, "t_max": 1.0, "n_a": 10, "n_x": 12,
        "delta": 0.5, "eta": 6.0,
        "mu": { "type": "constant", "m0": 0.3 },
        "beta": { "type": "constant", "b0": 0.6 },
        "p0": { "type": "constant", "value": 1.0 },
        "bounds": { "sigma1": -0.8, "sigma2": 0.0 }
    }"#
}

#[test]
fn simulate_writes_outputs_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", basic_config());
    let out = dir.path().join("run");
    let r = bitectl(&[
        "simulate",
        "--config", cfg.to_str().unwrap(),
        "--control", "lower",
        "--mode", "renewal",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    for f in ["manifest.json", "state.csv", "boundary.csv", "summary.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let state = fs::read_to_string(out.join("state.csv")).unwrap();
    assert!(state.starts_with("a,t,x,value\n"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["min_value"].as_f64().unwrap() >= 0.0);
    // a_max = 2, n_a = 10 gives da = dt = 0.2, so n_t = 5: six time nodes.
    assert_eq!(summary["mass_by_time"].as_array().unwrap().len(), 6);
}

#[test]
fn invalid_upper_bound_exits_1_naming_key() {
    let dir = tempfile::tempdir().unwrap();
    let body = basic_config().replace("\"sigma2\": 0.0", "\"sigma2\": 0.1");
    let cfg = write_config(dir.path(), "bad.json", &body);
    let out = dir.path().join("run");
    let r = bitectl(&[
        "simulate",
        "--config", cfg.to_str().unwrap(),
        "--control", "zero",
        "--mode", "renewal",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("bounds.sigma2"), "stderr: {stderr}");
}

#[test]
fn malformed_config_exits_1_with_json_path() {
    let dir = tempfile::tempdir().unwrap();
    let body = basic_config().replace("\"m0\": 0.3", "\"m0\": \"heavy\"");
    let cfg = write_config(dir.path(), "bad.json", &body);
    let r = bitectl(&[
        "simulate",
        "--config", cfg.to_str().unwrap(),
        "--control", "zero",
        "--mode", "renewal",
        "--out", dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("mu"), "stderr: {stderr}");
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", basic_config());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let r = bitectl(&[
            "simulate",
            "--config", cfg.to_str().unwrap(),
            "--control", "lower",
            "--mode", "renewal",
            "--out", out.to_str().unwrap(),
        ]);
        assert!(r.status.success());
    }
    for f in ["state.csv", "boundary.csv", "summary.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs between runs"
        );
    }
}

#[test]
fn fixed_point_mode_records_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", basic_config());
    let out = dir.path().join("run");
    let r = bitectl(&[
        "simulate",
        "--config", cfg.to_str().unwrap(),
        "--control", "lower",
        "--mode", "fixed-point",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["fp_iterations"].as_u64().unwrap() >= 1);
}

#[test]
fn adjoint_writes_switching_indicator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", basic_config());
    let out = dir.path().join("run");
    let r = bitectl(&[
        "adjoint",
        "--config", cfg.to_str().unwrap(),
        "--control", "lower",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let sw = fs::read_to_string(out.join("switching.csv")).unwrap();
    assert!(sw.starts_with("a,t,x,indicator\n"));
    assert!(out.join("adjoint.csv").is_file());
}

#[test]
fn optimize_converges_and_respects_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", basic_config());
    let out = dir.path().join("run");
    let r = bitectl(&[
        "optimize",
        "--config", cfg.to_str().unwrap(),
        "--out", out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], serde_json::Value::Bool(true));
    assert!(summary["harvest"].as_f64().unwrap() > 0.0);
    for f in ["u_star.csv", "p_star.csv", "q.csv", "history.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn optimize_hitting_iteration_cap_exits_2() {
    // Strong renewal over a long horizon: the first switching update is
    // nonzero, so one iteration cannot converge.
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
        "a_max": 4.0, "t_max": 4.0, "n_a": 8, "n_x": 8,
        "delta": 0.0, "eta": 12.0,
        "mu": { "type": "constant", "m0": 0.0 },
        "beta": { "type": "constant", "b0": 5.0 },
        "p0": { "type": "constant", "value": 1.0 },
        "bounds": { "sigma1": -1.0, "sigma2": 0.0 }
    }"#;
    let cfg = write_config(dir.path(), "c.json", body);
    let out = dir.path().join("run");
    let r = bitectl(&[
        "optimize",
        "--config", cfg.to_str().unwrap(),
        "--max-iter", "1",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(2));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], serde_json::Value::Bool(false));
}

#[test]
fn oracle_agrees_with_sweep_on_desk_grid() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{
        "a_max": 1.0, "t_max": 1.0, "n_a": 2, "n_x": 4,
        "delta": 0.4, "eta": 6.0,
        "mu": { "type": "constant", "m0": 0.4 },
        "beta": { "type": "constant", "b0": 0.6 },
        "p0": { "type": "constant", "value": 1.0 },
        "bounds": { "sigma1": -0.9, "sigma2": -0.1 }
    }"#;
    let cfg = write_config(dir.path(), "c.json", body);
    let out = dir.path().join("run");
    let r = bitectl(&["oracle", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let oracle: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("oracle.json")).unwrap()).unwrap();
    let gap = oracle["agreement_gap"].as_f64().unwrap();
    let best = oracle["psi_best"].as_f64().unwrap();
    assert!(gap <= 1e-6 * best.abs(), "gap {gap} vs psi {best}");
}

#[test]
fn verify_all_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", basic_config());
    let out = dir.path().join("run");
    let r = bitectl(&[
        "verify",
        "--suite", "all",
        "--config", cfg.to_str().unwrap(),
        "--seed", "3",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let suites = report.as_array().unwrap();
    assert_eq!(suites.len(), 4);
    assert!(suites.iter().all(|s| s["passed"].as_bool().unwrap()));
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("comparison: PASS"), "stdout: {stdout}");
}

#[test]
fn print_config_schema_emits_json() {
    let r = bitectl(&["--print-config-schema"]);
    assert!(r.status.success());
    let schema: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert!(schema["properties"]["bounds"].is_object());
}

#[test]
fn version_flag_works() {
    let r = bitectl(&["--version"]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).contains("bitectl"));
}

#[test]
fn control_csv_round_trips_through_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", basic_config());
    // First produce an optimal control, then feed it back as csv.
    let opt = dir.path().join("opt");
    assert!(bitectl(&["optimize", "--config", cfg.to_str().unwrap(), "--out", opt.to_str().unwrap()])
        .status
        .success());
    let control = format!("csv:{}", opt.join("u_star.csv").to_str().unwrap());
    let out = dir.path().join("sim");
    let r = bitectl(&[
        "simulate",
        "--config", cfg.to_str().unwrap(),
        "--control", &control,
        "--mode", "renewal",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
}
