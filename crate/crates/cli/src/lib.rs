//! Pipeline orchestration for the `cenas` binary.
//!
//! Each subcommand reads its upstream artifacts from the output directory
//! and writes its own. Text outputs start with a `# config-hash:` line.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::path::PathBuf;

pub use commands::{run, Command};
pub use config::{ExperimentConfig, SpaceChoice};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("missing artifact: {}", .0.display())]
    Missing(PathBuf),
    #[error("unreadable artifact: {0}")]
    Artifact(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Missing(_) | CliError::Artifact(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<cenas_core::Error> for CliError {
    fn from(e: cenas_core::Error) -> Self {
        use cenas_core::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidConfig(_)
            | E::InvalidTemperature(_)
            | E::BudgetExceedsSpace { .. }
            | E::ProjectionRank { .. }
            | E::MalformedGenotype(_)
            | E::InsufficientData(_) => CliError::Config(msg),
            E::Diverged { .. }
            | E::NonFiniteInput
            | E::NonFiniteJacobian { .. }
            | E::DegenerateArchitecture(_)
            | E::DegenerateProjection
            | E::NonFiniteLoss { .. }
            | E::Factorization
            | E::UndefinedCorrelation
            | E::ZeroVariance => CliError::Numeric(msg),
            E::Format { .. } | E::Missing(_) | E::ShapeMismatch { .. } => CliError::Artifact(msg),
            E::LengthMismatch(..) | E::Io(_) => CliError::Other(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
