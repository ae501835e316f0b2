//! Experiment runner for `henon-core`: configuration, subcommands, records.
//!
//! A run reads an [`ExperimentConfig`](config::ExperimentConfig), executes one
//! [`Command`](run::Command) and writes `record.json` plus its artifacts
//! (CSV with 17 significant digits, JSON, PPM/PNG images) into one directory.

pub mod config;
pub mod record;
pub mod run;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("{0}")]
    Core(#[from] henon_core::Error),
    #[error("{0}")]
    Run(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "parse",
            CliError::Invalid(_) => "invalid_config",
            CliError::Core(_) => "computation",
            CliError::Run(_) => "run",
            CliError::Io(_) => "io",
        }
    }
}
