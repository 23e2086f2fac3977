use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid question `{id}`: {reason}")]
    InvalidQuestion { id: String, reason: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("all {runs} executor runs failed for question `{question_id}`: {last_error}")]
    AllExecutorsFailed {
        question_id: String,
        runs: usize,
        last_error: String,
    },

    #[error("all {runs} analyst runs failed for question `{question_id}`: {last_error}")]
    AllAnalystsFailed {
        question_id: String,
        runs: usize,
        last_error: String,
    },

    #[error(
        "exact enumeration would visit {work} outcomes (limit {limit}); use monte_carlo_accuracy for this configuration"
    )]
    Capacity { work: u128, limit: u128 },

    #[error("replay failure: {0}")]
    Replay(String),

    #[error("calibration rules: {0}")]
    Rules(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
