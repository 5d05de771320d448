//! Command-line pipeline over the steering-estimation library: dataset
//! generation, graph inspection, training, evaluation, path reconstruction
//! and gradient verification.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod svg;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "steercloud",
    about = "Steering estimation from semantic point clouds",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corridor dataset with a 12/2/1-style split.
    Synth(commands::synth::SynthArgs),
    /// Build, prune and export the kNN graph of one frame.
    #[command(name = "build-graph")]
    BuildGraph(commands::build_graph::BuildGraphArgs),
    /// Train a preset on a dataset directory.
    Train(commands::train::TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(commands::eval::EvalArgs),
    /// Reconstruct the driven path from predicted steering angles.
    Path(commands::path::PathArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::BuildGraph(args) => commands::build_graph::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Path(args) => commands::path::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
    }
}
