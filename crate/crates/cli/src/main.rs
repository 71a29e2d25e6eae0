//! `ldl`: dataset generation, training, grid search, depth sweeps, diffusion
//! simulation, and spectral checks.

mod commands;
mod error;
mod resolved;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use commands::{generate, grid, simulate, spectra, sweep, train};
use error::CliError;

#[derive(Parser)]
#[command(name = "ldl", version, about = "Lying graph convolution lab")]
struct Cli {
    /// Increase log verbosity (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize, Deserialize, Debug, Clone)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic multipartite dataset with random splits.
    Generate(generate::GenerateArgs),
    /// Train one configuration on every split of a dataset.
    Train(train::TrainArgs),
    /// Grid search with per-split model selection.
    Grid(grid::GridArgs),
    /// Validation accuracy as a function of depth.
    Sweep(sweep::SweepArgs),
    /// Integrate a diffusion system with both solvers.
    Simulate(simulate::SimulateArgs),
    /// Check the spectrum of lying diffusion operators.
    Spectra(spectra::SpectraArgs),
    /// Re-run a command from its resolved_config.json.
    #[serde(skip)]
    Replay {
        /// Path to a resolved-config JSON written by an earlier run.
        path: std::path::PathBuf,
    },
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate(args) => generate::run(args),
        Command::Train(args) => train::run(args),
        Command::Grid(args) => grid::run(args),
        Command::Sweep(args) => sweep::run(args),
        Command::Simulate(args) => simulate::run(args),
        Command::Spectra(args) => spectra::run(args),
        Command::Replay { path } => run(resolved::load(&path)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
