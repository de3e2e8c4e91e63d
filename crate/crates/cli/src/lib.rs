//! Command-line front end: scoring single pairs and datasets, ablations,
//! annotator agreement, regression weight fitting and error tables.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

mod commands;
pub mod config;

pub use config::{BackendKind, GlobalArgs, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STAGE: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Schema(String),
    #[error("{0}")]
    Stage(String),
    #[error("{failed} of {total} pairs failed")]
    Partial { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Schema(_) => EXIT_CONFIG,
            CliError::Stage(_) => EXIT_STAGE,
            CliError::Partial { .. } => EXIT_PARTIAL,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "marg", version, about = "Patent-pair similarity with a multi-aspect reasoning graph")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score one pair of patent documents
    ScorePair {
        a: PathBuf,
        b: PathBuf,
        #[arg(long = "pair-id")]
        pair_id: Option<String>,
    },
    /// Score every pair of a dataset and evaluate against its gold scores
    Batch {
        dataset: PathBuf,
        /// Use a single-prompt baseline (io, cot, few-shot) instead of the graph
        #[arg(long)]
        baseline: Option<String>,
        /// json, text or csv; defaults to the --out extension
        #[arg(long)]
        format: Option<String>,
        /// section or class
        #[arg(long = "ipc-level", default_value = "section")]
        ipc_level: String,
        #[arg(long = "top-k", default_value_t = 50)]
        top_k: usize,
    },
    /// Compare the full graph against equal weighting and dimension subsets
    Ablate {
        dataset: PathBuf,
        #[arg(long)]
        format: Option<String>,
    },
    /// Fleiss' kappa and Cronbach's alpha over annotator ratings
    Agreement { ratings: PathBuf },
    /// Fit fixed dimension weights by regression with k-fold evaluation
    FitWeights {
        dataset: PathBuf,
        /// ols, ridge or lasso
        #[arg(long, default_value = "ols")]
        method: String,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Residuals, per-IPC breakdown and largest errors of a prediction table
    Errors {
        table: PathBuf,
        #[arg(long = "top-k", default_value_t = 5)]
        top_k: usize,
        #[arg(long = "ipc-level", default_value = "section")]
        ipc_level: String,
        #[arg(long)]
        format: Option<String>,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
