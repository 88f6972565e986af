//! `qsteer`: steering ellipsoids, simulated steering experiments, quadric
//! fits and volume monogamy from the command line.
//!
//! Exit codes: 0 success, 1 internal failure, 2 invalid configuration or
//! input, 3 degenerate point cloud, 4 I/O failure.

mod commands;
mod output;
mod state;

use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

use qsteer::fitquad::FitError;
use qsteer::pipeline::PipelineError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("degenerate point cloud: {0}")]
    Degenerate(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) | PipelineError::State(_) => CliError::Config(e.to_string()),
            PipelineError::Fit(FitError::Degenerate(_)) => CliError::Degenerate(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Degenerate(_) => CliError::Degenerate(e.to_string()),
            FitError::TooFewPoints { .. } | FitError::NonFinite => CliError::Input(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = commands::Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
