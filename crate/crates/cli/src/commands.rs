use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Result};
use serde_json::json;

use bitectl_core::config::{read_field_csv, Config};
use bitectl_core::control::{
    brute_force_optimum, objective, sweep, SweepConfig,
};
use bitectl_core::forward::{
    forward_solve, forward_solve_fixed_point, mass_by_time, ForwardConfig,
};
use bitectl_core::adjoint::{adjoint_solve, AdjointConfig};
use bitectl_core::grid::Field;
use bitectl_core::model::{validate_params, ProblemData, ValidationIssue};
use bitectl_core::verify::{run_suites, SuiteKind, SuiteOptions};
use bitectl_core::Error as CoreError;

use crate::manifest;
use crate::{Command, SimulateMode, SuiteArg};

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Simulate { config, control, mode, out } => simulate(&config, &control, mode, &out),
        Command::Adjoint { config, control, out } => adjoint_cmd(&config, &control, &out),
        Command::Optimize { config, omega, tol, max_iter, out } => {
            optimize(&config, omega, tol, max_iter, &out)
        }
        Command::Oracle { config, out } => oracle(&config, &out),
        Command::Verify { suite, config, seed, out } => verify(suite, &config, seed, &out),
    }
}

/// Maps a validation issue onto the JSON path of the offending config key.
fn config_path_of(issue: &ValidationIssue) -> String {
    match issue.hypothesis {
        "J1" => "mu".into(),
        "J2" => "beta".into(),
        "J3" => "p0".into(),
        "f" => "f".into(),
        "U" => {
            if issue.message.starts_with("sigma2") {
                "bounds.sigma2".into()
            } else {
                "bounds.sigma1".into()
            }
        }
        _ => "(config)".into(),
    }
}

/// Loads and validates; validation failures are reported with the JSON
/// path of each offending key and surface as exit code 1.
fn load_problem(config_path: &Path) -> Result<(Config, ProblemData<f64>)> {
    let config = Config::load(config_path).map_err(|e| anyhow!("{e}"))?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let data = config.build_problem(base).map_err(|e| anyhow!("{e}"))?;
    let report = validate_params(&data);
    if !report.passed() {
        let mut msg = String::from("invalid configuration:");
        for issue in &report.issues {
            msg.push_str(&format!(
                "\n  at {}: [{}] {}",
                config_path_of(issue),
                issue.hypothesis,
                issue.message
            ));
        }
        bail!(msg);
    }
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    Ok((config, data))
}

/// zero | lower | upper | csv:<path>
fn control_field(spec: &str, data: &ProblemData<f64>) -> Result<Field<f64>> {
    match spec {
        "zero" => Ok(Field::zeros(&data.grid)),
        "lower" => Ok(data.bounds.lower.clone()),
        "upper" => Ok(data.bounds.upper.clone()),
        other => {
            if let Some(path) = other.strip_prefix("csv:") {
                read_field_csv(&data.grid, &PathBuf::from(path)).map_err(|e| anyhow!("{e}"))
            } else {
                bail!("unknown control spec {other:?} (expected zero|lower|upper|csv:<path>)")
            }
        }
    }
}

fn write_field_csv(path: &Path, field: &Field<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    field.write_csv(&mut w).map_err(|e| anyhow!("{e}"))?;
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn simulate(config_path: &Path, control: &str, mode: SimulateMode, out: &Path) -> Result<ExitCode> {
    let (config, data) = load_problem(config_path)?;
    manifest::write(out, &config, None)?;
    let u = control_field(control, &data)?;

    let mut fp_iterations: Option<usize> = None;
    let state = match mode {
        SimulateMode::Renewal => forward_solve(&data, &u, &ForwardConfig::renewal())
            .map_err(|e| anyhow!("{e}"))?,
        SimulateMode::FixedPoint => {
            match forward_solve_fixed_point(&data, &u, &ForwardConfig::renewal()) {
                Ok(outcome) => {
                    fp_iterations = Some(outcome.iterations);
                    outcome.state
                }
                Err(CoreError::FixedPointDiverged { max_iter, last, history }) => {
                    write_json(
                        &out.join("summary.json"),
                        &json!({
                            "converged": false,
                            "fp_iterations": max_iter,
                            "residual_history": history,
                        }),
                    )?;
                    eprintln!(
                        "fixed-point iteration did not converge in {max_iter} iterations (last residual {last:e})"
                    );
                    return Ok(ExitCode::from(2));
                }
                Err(e) => return Err(anyhow!("{e}")),
            }
        }
    };

    write_field_csv(&out.join("state.csv"), &state)?;

    let g = state.grid();
    let mut w = BufWriter::new(File::create(out.join("boundary.csv"))?);
    writeln!(w, "t,x,b")?;
    for n in 0..=g.n_t() {
        for k in 0..g.n_x() {
            writeln!(w, "{},{},{:.16e}", g.time(n), g.x_center(k), state.at(0, n, k))?;
        }
    }
    w.flush()?;

    write_json(
        &out.join("summary.json"),
        &json!({
            "mass_by_time": mass_by_time(&state),
            "min_value": state.min_value(),
            "fp_iterations": fp_iterations,
        }),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn adjoint_cmd(config_path: &Path, control: &str, out: &Path) -> Result<ExitCode> {
    let (config, data) = load_problem(config_path)?;
    manifest::write(out, &config, None)?;
    let u = control_field(control, &data)?;
    let q = adjoint_solve(&data, &u, &AdjointConfig::default()).map_err(|e| anyhow!("{e}"))?;
    write_field_csv(&out.join("adjoint.csv"), &q)?;

    // Switching indicator: sign of q + 1 per node.
    let g = q.grid();
    let mut w = BufWriter::new(File::create(out.join("switching.csv"))?);
    writeln!(w, "a,t,x,indicator")?;
    for i in 0..=g.n_a() {
        for n in 0..=g.n_t() {
            for k in 0..g.n_x() {
                let s = q.at(i, n, k) + 1.0;
                let ind = if s > 0.0 { 1 } else if s < 0.0 { -1 } else { 0 };
                writeln!(w, "{},{},{},{}", g.age(i), g.time(n), g.x_center(k), ind)?;
            }
        }
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn optimize(config_path: &Path, omega: f64, tol: f64, max_iter: usize, out: &Path) -> Result<ExitCode> {
    if omega.is_nan() || omega <= 0.0 || omega > 1.0 {
        bail!("omega must lie in (0, 1], got {omega}");
    }
    if tol.is_nan() || tol <= 0.0 {
        bail!("tol must be positive, got {tol}");
    }
    if max_iter == 0 {
        bail!("max-iter must be at least 1");
    }
    let (config, data) = load_problem(config_path)?;
    manifest::write(out, &config, None)?;

    let cfg = SweepConfig { relaxation: omega, max_iter, control_tol: tol, ..SweepConfig::default() };
    let result = sweep(&data, &cfg).map_err(|e| anyhow!("{e}"))?;

    write_field_csv(&out.join("u_star.csv"), &result.control)?;
    write_field_csv(&out.join("p_star.csv"), &result.state)?;
    write_field_csv(&out.join("q.csv"), &result.adjoint)?;

    let mut w = BufWriter::new(File::create(out.join("history.csv"))?);
    writeln!(w, "iter,psi,residual")?;
    for k in 0..result.residual_history.len() {
        writeln!(w, "{},{:.16e},{:.16e}", k + 1, result.objective_history[k], result.residual_history[k])?;
    }
    w.flush()?;

    write_json(
        &out.join("summary.json"),
        &json!({
            "converged": result.converged,
            "iterations": result.iterations,
            "psi_star": result.objective(),
            "harvest": result.harvest(),
        }),
    )?;
    Ok(if result.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn oracle(config_path: &Path, out: &Path) -> Result<ExitCode> {
    let (config, data) = load_problem(config_path)?;
    manifest::write(out, &config, None)?;

    let brute = brute_force_optimum(&data).map_err(|e| anyhow!("{e}"))?;
    let swept = sweep(&data, &SweepConfig::default()).map_err(|e| anyhow!("{e}"))?;
    let psi_sweep = objective(&swept.control, &swept.state);
    let gap = (psi_sweep - brute.value).abs();

    write_json(
        &out.join("oracle.json"),
        &json!({
            "psi_best": brute.value,
            "psi_sweep": psi_sweep,
            "agreement_gap": gap,
            "sweep_converged": swept.converged,
            "ties": brute
                .ties
                .iter()
                .map(|(p, v)| json!({ "pattern": p, "psi": v }))
                .collect::<Vec<_>>(),
            "tie_cap_hit": brute.tie_cap_hit,
        }),
    )?;
    Ok(if swept.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn verify(suite: SuiteArg, config_path: &Path, seed: u64, out: &Path) -> Result<ExitCode> {
    let (config, data) = load_problem(config_path)?;
    manifest::write(out, &config, Some(seed))?;

    let kinds: Vec<SuiteKind> = match suite {
        SuiteArg::Comparison => vec![SuiteKind::Comparison],
        SuiteArg::Energy => vec![SuiteKind::Energy],
        SuiteArg::Gronwall => vec![SuiteKind::Gronwall],
        SuiteArg::Eigen => vec![SuiteKind::Eigen],
        SuiteArg::All => vec![
            SuiteKind::Comparison,
            SuiteKind::Energy,
            SuiteKind::Gronwall,
            SuiteKind::Eigen,
        ],
    };
    let opts = SuiteOptions { seed, ..SuiteOptions::default() };
    let reports = run_suites(&data, &kinds, &opts).map_err(|e| anyhow!("{e}"))?;
    for r in &reports {
        println!(
            "{}: {} (worst violation {:.3e})",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.worst_violation
        );
    }
    write_json(&out.join("report.json"), &serde_json::to_value(&reports)?)?;
    Ok(if reports.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}
