//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 validation/config/usage error, 2 solver
//! nonconvergence, 3 property-suite failure.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bitectl", version, about = "Age-structured biting-time plasticity solver and harvesting optimizer")]
struct Cli {
    /// Print the JSON schema of the configuration keys and exit.
    #[arg(long, global = true)]
    print_config_schema: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the state system for a fixed control.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// zero | lower | upper | csv:<path>
        #[arg(long, default_value = "zero")]
        control: String,
        #[arg(long, value_enum, default_value_t = SimulateMode::Renewal)]
        mode: SimulateMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the costate system backward for a fixed control.
    Adjoint {
        #[arg(long)]
        config: PathBuf,
        /// zero | lower | upper | csv:<path>
        #[arg(long)]
        control: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the forward-backward sweep to the optimal bang-bang control.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// Control-update damping in (0, 1].
        #[arg(long, default_value_t = 0.5)]
        omega: f64,
        /// L2 tolerance on the control update.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustive bang-bang enumeration on a desk-scale grid, compared
    /// against the sweep.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run property suites and write report.json.
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SimulateMode {
    Renewal,
    FixedPoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Comparison,
    Energy,
    Gronwall,
    Eigen,
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_config_schema {
        println!(
            "{}",
            serde_json::to_string_pretty(&bitectl_core::config::config_schema())
                .expect("schema serializes")
        );
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: no subcommand given (try --help)");
        return ExitCode::from(1);
    };
    match commands::run(command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
