//! `bassflow {solve|simulate|check|oracle}`.
//!
//! Exit codes: 0 success, 2 time budget reached before the gradient
//! tolerance, 3 invalid input or failed precondition, 4 numerical failure
//! or a failed verification.

mod json;
mod run;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spec::CommonArgs;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] bassflow::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Parser)]
#[command(name = "bassflow", version, about = "Bass martingales by gradient flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the flow and write trace.csv, summary.json and bass_measure.csv.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Slice depth for the bound certificate (default: half the support gap).
        #[arg(long)]
        delta: Option<f64>,
        /// Monte-Carlo draws per atom in dimension two and above.
        #[arg(long, default_value_t = bassflow::semidiscrete::DEFAULT_MC_SAMPLES)]
        mc_samples: usize,
    },
    /// Simulate the martingale of a solved Bass measure and check it.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Bass measure from `solve` (default: <out>/bass_measure.csv).
        #[arg(long)]
        bass_measure: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        /// Number of equal time steps on [0, 1].
        #[arg(long, default_value_t = 2)]
        steps: usize,
        /// Also write paths.csv.
        #[arg(long)]
        write_paths: bool,
    },
    /// Convex order, irreducibility and the a priori bound.
    Check {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Derivative-free reference minimizer (1-D, at most 16 atoms).
    Oracle {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 20_000)]
        budget: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BASSFLOW_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Solve { common, delta, mc_samples } => run::solve(common, *delta, *mc_samples),
        Command::Simulate { common, bass_measure, paths, steps, write_paths } => {
            run::simulate(common, bass_measure.as_deref(), *paths, *steps, *write_paths)
        }
        Command::Check { common, delta } => run::check(common, *delta),
        Command::Oracle { common, budget } => run::oracle(common, *budget),
    };
    ExitCode::from(code)
}
