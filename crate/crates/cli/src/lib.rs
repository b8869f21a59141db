//! Batch front-end for the `waylab` library.
//!
//! Every command reads an optional JSON config, runs deterministically from
//! `--seed`, and writes a single JSON report (plus a CSV export next to it
//! when `--out` is given). Exit codes: 0 when everything passes, 2 when a
//! checked relation is violated beyond tolerance, 1 on usage or input errors.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use report::{Outcome, Report, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(
    name = "waylab",
    version,
    about = "Conservation-law limits on measurements and CNOT gates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON config for the command.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Where to write the JSON report (stdout when absent).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Seed for every random draw of the run.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Tolerance on slacks and residuals.
    #[arg(long, global = true, value_name = "X")]
    pub tol: Option<f64>,

    /// Restart budget for optimizer and worst-state searches.
    #[arg(long, global = true, value_name = "N")]
    pub restarts: Option<usize>,

    /// Suppress the summary on stderr and the search traces in the report.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Residuals of the two commutator identities.
    VerifyIdentities,
    /// The qway-1, qway-2, summed and fundamental inequalities.
    CheckBounds,
    /// Gate fidelity, measurement view and noise-fidelity chain of one implementation.
    EvalImpl,
    /// Search conserving implementations for the largest worst-case fidelity.
    Optimize,
    /// Ceilings and photon statistics in the coherent-field setting.
    BosonCheck,
    /// Precise, non-disturbing model for an observable commuting with L1.
    PositiveControl,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyIdentities => "verify-identities",
            Command::CheckBounds => "check-bounds",
            Command::EvalImpl => "eval-impl",
            Command::Optimize => "optimize",
            Command::BosonCheck => "boson-check",
            Command::PositiveControl => "positive-control",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Core(#[from] waylab::Error),
    #[error("cannot write output: {0}")]
    Write(#[from] std::io::Error),
    #[error("cannot write CSV: {0}")]
    Csv(#[from] csv::Error),
}

pub const EXIT_PASS: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_VIOLATION: u8 = 2;

/// Runs one command and returns the process exit code. Errors are printed
/// to stderr.
pub fn run(cli: &Cli) -> ExitCode {
    match commands::dispatch(cli) {
        Ok(Outcome::Pass) => ExitCode::from(EXIT_PASS),
        Ok(Outcome::Violation) => ExitCode::from(EXIT_VIOLATION),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
