//! Command-line front end: reproduction curves, measurement-sequence
//! simulation, and transmission-spectrum fitting, wired together through
//! plain CSV files and a flat key-value configuration format.

pub mod commands;
pub mod config;
pub mod records;

use atomphase_core::estimation::EstimationError;
use thiserror::Error;

pub use config::{parse_config, parse_config_str, ConfigError, RunConfig};

/// Exit codes: 1 for I/O problems, 2 for configuration errors, 3 for data
/// errors, 4 for fit failures.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Fit(String),
}

impl CliError {
    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Fit(_) => 4,
        }
    }
}

impl From<EstimationError> for CliError {
    fn from(err: EstimationError) -> Self {
        match err {
            EstimationError::DegenerateFit
            | EstimationError::NotConverged
            | EstimationError::Params(_) => CliError::Fit(err.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
