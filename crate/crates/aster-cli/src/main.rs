//! Command-line workbench for the cable-suspended payload system.

mod commands;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aster",
    about = "Cable-suspended quadrotor workbench: training, evaluation, seeding diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy with PPO.
    Train(commands::train::TrainArgs),
    /// Evaluate a policy over tracks and report SR / timing / velocities.
    Eval(commands::eval::EvalArgs),
    /// Robustness sweep over payload-mass / cable-length variations.
    Sweep(commands::sweep::SweepArgs),
    /// Generate seeds and report drift/validity diagnostics.
    SeedCheck(commands::seedcheck::SeedCheckArgs),
    /// Export trajectory CSVs from a fresh rollout or a previous run.
    Export(commands::export::ExportArgs),
}

fn main() -> Result<()> {
    // ASTER_NUM_WORKERS caps parallelism; results do not depend on it.
    if let Ok(v) = std::env::var("ASTER_NUM_WORKERS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .ok();
            }
        }
    }
    match Cli::parse().command {
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::SeedCheck(args) => commands::seedcheck::run(args),
        Command::Export(args) => commands::export::run(args),
    }
}
