//! Command-line front end: network generation, simulation,
//! reconstruction, evaluation, convergence sweeps, and end-to-end
//! benchmark reproductions. Every command works from files alone and is
//! deterministic given its seeds.

mod commands;
mod svg;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lfrecon", version)]
#[command(about = "Simulate noisy leader-follower consensus and reconstruct hidden leaders from follower time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random leader-follower network and write it as JSON
    Generate(commands::GenerateArgs),
    /// Integrate the noisy consensus map and write the follower time series
    Simulate(commands::SimulateArgs),
    /// Fit lag blocks from a trajectory and recover the hidden part
    Reconstruct(commands::ReconstructArgs),
    /// Compare a reconstruction against its ground-truth network
    Evaluate(commands::EvaluateArgs),
    /// Rerun the pipeline across record lengths and seeds
    Sweep(commands::SweepArgs),
    /// Run the single-hidden-leader benchmark recipe end to end
    ReproduceFig1(commands::ReproduceArgs),
    /// Run the four-hidden-leader benchmark recipe end to end
    ReproduceFig2(commands::ReproduceArgs),
}

/// 2 for configuration problems, 3 for numerical or degeneracy
/// failures, 4 for violated model assumptions.
fn exit_code(e: &lfrecon::Error) -> u8 {
    use lfrecon::Error::*;
    match e {
        Shape(_) | InvalidParameter(_) | Parse(_) | Io(_) | Json(_) | Csv(_) => 2,
        GenerationExhausted { .. }
        | Unstable { .. }
        | Diverged { .. }
        | TooShort { .. }
        | IllConditioned { .. }
        | NoLeaderCoupling
        | ZeroCouplingVector
        | EmptySupport { .. }
        | NoLeaderDetected
        | Degenerate(_) => 3,
        AssumptionViolated(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Reconstruct(args) => commands::reconstruct(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::ReproduceFig1(args) => commands::reproduce(commands::Recipe::Fig1, args),
        Command::ReproduceFig2(args) => commands::reproduce(commands::Recipe::Fig2, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
