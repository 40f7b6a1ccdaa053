//! Experiment workbench: configuration, pipelines, sweeps, reports and plots.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod plot;
pub mod report;

use std::path::PathBuf;

pub use config::{ConfigError, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] graph_unlearn::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("usage: {0}")]
    Usage(String),
}

impl CliError {
    /// Short machine-readable kind for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(_) => "runtime",
            CliError::Io { .. } | CliError::Csv(_) => "io",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn details(&self) -> Vec<String> {
        match self {
            CliError::Config(ConfigError::Invalid(v)) => v.clone(),
            _ => Vec::new(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
