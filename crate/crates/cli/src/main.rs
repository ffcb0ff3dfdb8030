//! Command line front end for the spectral generator neural operator.
//!
//! Every flag can also be set through an `SGNO_`-prefixed environment
//! variable. Exit codes: 0 on success, 1 on usage or I/O errors, 2 when a
//! numeric check fails (training divergence, failed stability bound).

mod commands;
mod config;
mod manifest;
mod plot;
mod util;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use sgno::SgnoError;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sgno",
    version,
    about = "Spectral generator neural operator: data, training, rollouts, bounds, ablations, benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/test trajectories for a registered scenario.
    GenData(commands::gen_data::GenDataArgs),
    /// Train a model on a generated dataset.
    Train(commands::train::TrainArgs),
    /// Roll a checkpoint out over the test split and plot the errors.
    Rollout(commands::rollout::RolloutArgs),
    /// Check the stability bounds of a trained checkpoint.
    Verify(commands::verify::VerifyArgs),
    /// Compare the full model against its two single-pathway ablations.
    Ablate(commands::ablate::AblateArgs),
    /// Measure parameter count, inference latency, and training throughput.
    Bench(commands::bench::BenchArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::GenData(args) => commands::gen_data::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Rollout(args) => commands::rollout::run(args),
        Command::Verify(args) => commands::verify::run(args),
        Command::Ablate(args) => commands::ablate::run(args),
        Command::Bench(args) => commands::bench::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                SgnoError::Numeric { .. } | SgnoError::TrainDiverged { .. } => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
