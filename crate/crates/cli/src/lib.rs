//! Batch runner, scorer and simulation sweeps on top of `ensemblex`.

pub mod config;
pub mod dataset;
pub mod journal;
pub mod runner;
pub mod score;
pub mod submission;
pub mod sweep;

use thiserror::Error;

/// Errors surfaced by the command-line tool, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("transport: {0}")]
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Transport(_) => 3,
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<ensemblex::Error> for CliError {
    fn from(err: ensemblex::Error) -> Self {
        use ensemblex::Error as E;
        match err {
            E::Replay(_) => CliError::Transport(err.to_string()),
            E::InvalidQuestion { .. } => CliError::Data(err.to_string()),
            E::Rules(_) | E::Usage(_) | E::InvalidParams(_) | E::Capacity { .. } => {
                CliError::Config(err.to_string())
            }
            E::AllExecutorsFailed { .. } | E::AllAnalystsFailed { .. } => {
                CliError::Transport(err.to_string())
            }
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
