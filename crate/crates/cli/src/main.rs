//! Command-line driver for the cued-speech recognition pipeline: synthetic
//! corpus generation, featurization, CTC training, word decoding,
//! attention-based segmentation, and scoring.

mod commands;
mod manifest;
mod render;
mod summary;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "acsr",
    about = "Cued-speech recognition pipeline at desk scale",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with injected hand-lip asynchrony.
    Synth(commands::synth::Args),
    /// Fit the feature pipeline on landmarks and write stream files.
    Featurize(commands::featurize::Args),
    /// Train the three-stream CTC model on stream files.
    Train(commands::train::Args),
    /// Decode utterances: greedy phones or lexicon beam search with LM.
    Decode(commands::decode::Args),
    /// Extract attention paths, onsets, and segmentations (optionally SVGs).
    Segment(commands::segment::Args),
    /// Score transcripts and segmentations against the manifest references.
    Eval(commands::eval::Args),
    /// Minimal external rescorer speaking the NDJSON protocol (test helper).
    #[command(hide = true)]
    StubScorer(commands::stub_scorer::Args),
}

/// Exit 1 for input/validation problems, 2 for failures while processing.
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    fn usage(err: impl Into<anyhow::Error>) -> Self {
        CliError::Usage(err.into())
    }
}

/// Input-phase errors are usage errors.
pub fn usage<T>(result: anyhow::Result<T>) -> Result<T, CliError> {
    result.map_err(CliError::usage)
}

/// Processing-phase errors are runtime errors.
pub fn runtime<T>(result: anyhow::Result<T>) -> Result<T, CliError> {
    result.map_err(CliError::Runtime)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };

    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Featurize(args) => commands::featurize::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Decode(args) => commands::decode::run(args),
        Command::Segment(args) => commands::segment::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::StubScorer(args) => commands::stub_scorer::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
