//! `acsr stub-scorer`: a minimal external rescorer for exercising the NDJSON
//! protocol end to end. Scores every whitespace token at a fixed natural-log
//! probability.

use std::io::{BufRead, Write};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::{runtime, CliError};

#[derive(clap::Args)]
pub struct Args {
    /// Natural-log probability assigned to each token.
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub logprob_per_token: f64,
}

#[derive(Deserialize)]
struct Request {
    id: u64,
    text: String,
}

#[derive(Serialize)]
struct Response {
    id: u64,
    logprob_sum: f64,
    token_count: usize,
}

pub fn run(args: Args) -> Result<(), CliError> {
    runtime((|| -> Result<()> {
        let stdin = std::io::stdin();
        let mut stdout = std::io::stdout();
        for line in stdin.lock().lines() {
            let line = line.context("read request")?;
            if line.trim().is_empty() {
                continue;
            }
            let request: Request = serde_json::from_str(&line).context("parse request")?;
            let token_count = request.text.split_whitespace().count();
            let response = Response {
                id: request.id,
                logprob_sum: args.logprob_per_token * token_count as f64,
                token_count,
            };
            writeln!(stdout, "{}", serde_json::to_string(&response)?)?;
            stdout.flush()?;
        }
        Ok(())
    })())
}
