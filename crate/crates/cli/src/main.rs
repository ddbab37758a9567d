//! Command-line entry point for reproducible summarization experiments.
//!
//! Subcommands: `synth` (generate a synthetic corpus), `train` (fold-wise
//! training), `eval` (report + correlation curves), `rank-diag`
//! (attention-map rank histograms), `summarize` (per-video key-shot CSVs).
//!
//! Exit codes: 0 success, 2 configuration/validation failure, 3
//! numeric/runtime failure. `DMASUM_THREADS` caps fold parallelism.

mod commands;
mod config;
mod runner;

use clap::{Parser, Subcommand};
use dmasum::error::Error;

#[derive(Parser)]
#[command(
    name = "dmasum",
    version,
    about = "Dual mixture-attention video summarization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic dataset.
    Synth(commands::synth::SynthArgs),
    /// Train one model per fold and write checkpoints plus logs.
    Train(commands::train::TrainArgs),
    /// Evaluate checkpoints: report JSON and correlation curves.
    Eval(commands::eval::EvalArgs),
    /// Attention-map rank diagnostics and bucket histograms.
    RankDiag(commands::rank_diag::RankDiagArgs),
    /// Per-video scores, segments, and key-shot selections as CSV.
    Summarize(commands::summarize::SummarizeArgs),
}

fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Input(_)
        | Error::Shape { .. }
        | Error::Json(_)
        | Error::Load { .. }
        | Error::Domain(_)
        | Error::UndefinedCoefficient(_) => 2,
        Error::Numeric(_) | Error::State(_) | Error::Io { .. } => 3,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::RankDiag(args) => commands::rank_diag::run(args),
        Command::Summarize(args) => commands::summarize::run(args),
    };
    if let Err(error) = result {
        eprintln!("error: {}", error);
        std::process::exit(exit_code(&error));
    }
}
