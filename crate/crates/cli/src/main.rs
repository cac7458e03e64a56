//! `ivct`: simulate incomplete-view scans, train and apply the
//! reconstruction networks, and score them.

mod common;
mod eval;
mod reconstruct;
mod simulate;
mod train;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ivct", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Project images or phantoms and write sinograms, inputs and targets.
    Simulate(simulate::SimulateArgs),
    /// Train ProCT, or the dual-domain branches with `--dual`.
    Train(train::TrainArgs),
    /// Reconstruct one input with a trained checkpoint.
    Reconstruct(reconstruct::ReconstructArgs),
    /// Score FBP and trained models over a list of settings.
    Eval(eval::EvalArgs),
    /// Like `eval`, for a range of settings of one scenario.
    Sweep(eval::EvalArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = common::init_threads().and_then(|()| match &cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Train(a) => train::run(a),
        Command::Reconstruct(a) => reconstruct::run(a),
        Command::Eval(a) => eval::run(a, false),
        Command::Sweep(a) => eval::run(a, true),
    });
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
