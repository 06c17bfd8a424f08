//! Command-line driver: config ingestion, command dispatch, sweeps and
//! persisted reports.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod plugin;
pub mod sweep;

pub use cslab_core;

use cslab_core::analysis::{ConeError, ConvexityError, SeparationError};
use cslab_core::simplex::SimplexError;
use cslab_core::{ModelError, SpectraError};
use thiserror::Error;

pub use commands::{run_command, CommandKind};
pub use config::{parse_config, parse_config_str, ConfigError, RunConfig};

/// Exit codes of the `cslab` binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const NUMERICAL: i32 = 2;
    pub const HYPOTHESIS: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => exit::CONFIG,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Hypothesis(_) => exit::HYPOTHESIS,
        }
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        CliError::Config(ConfigError::Invalid { field: field.to_string(), message: message.into() })
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NoAxialFixedPoint { .. } => CliError::Hypothesis(e.to_string()),
            ModelError::UnsupportedModel | ModelError::InvalidParameters(_) => CliError::config("model", e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SimplexError> for CliError {
    fn from(e: SimplexError) -> Self {
        match e {
            SimplexError::Model(m) => m.into(),
            SimplexError::HypothesisViolation(_) => CliError::Hypothesis(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SpectraError> for CliError {
    fn from(e: SpectraError) -> Self {
        match e {
            SpectraError::Model(m) => m.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ConvexityError> for CliError {
    fn from(e: ConvexityError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<ConeError> for CliError {
    fn from(e: ConeError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SeparationError> for CliError {
    fn from(e: SeparationError) -> Self {
        match e {
            SeparationError::Model(m) => m.into(),
            SeparationError::Spectra(s) => s.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
