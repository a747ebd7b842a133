//! `epl` — simulation, fitting, and adequacy diagnostics for the
//! order-constrained extended Plackett-Luce ranking model.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or malformed input; exit code 2.
    #[error("{0}")]
    Validation(String),
    /// Failure while computing or writing results; exit code 3.
    #[error("{0}")]
    Runtime(String),
}

#[derive(Parser)]
#[command(
    name = "epl",
    version,
    about = "Bayesian inference for extended Plackett-Luce rankings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file of dotted keys; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulates a dataset from an EPL or Mallows-Hamming generator.
    Simulate,
    /// Runs the sampler and writes chain and posterior summary files.
    Fit,
    /// Computes the adequacy statistic and bootstrap p-value for a fit.
    Diagnose,
    /// Estimates the diagnostic's rejection rate over simulated datasets.
    PowerStudy,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.chain.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.display().to_string();
    }
    match cli.command {
        Command::Simulate => commands::cmd_simulate(&cfg),
        Command::Fit => commands::cmd_fit(&cfg),
        Command::Diagnose => commands::cmd_diagnose(&cfg),
        Command::PowerStudy => commands::cmd_power_study(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Validation(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(3),
            }
        }
    }
}
