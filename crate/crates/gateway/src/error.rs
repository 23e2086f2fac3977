use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::request::CacheKey;

/// One failed attempt, kept for telemetry on the final error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub error: String,
    /// Backoff slept before the next attempt; `None` on the last one.
    pub delay: Option<Duration>,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("unknown endpoint `{0}`")]
    UnknownEndpoint(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("endpoint `{endpoint}` failed after {} attempts: {last}", attempts.len())]
    Exhausted {
        endpoint: String,
        last: String,
        attempts: Vec<AttemptRecord>,
    },

    #[error("endpoint `{endpoint}` rejected the request: {reason}")]
    Rejected {
        endpoint: String,
        reason: String,
        attempts: Vec<AttemptRecord>,
    },

    #[error("strict replay miss for key {key}")]
    ReplayMiss { key: CacheKey },

    #[error("cache integrity error for key {key}: {reason}")]
    Integrity { key: CacheKey, reason: String },

    #[error("cache i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl GatewayError {
    pub fn attempts(&self) -> &[AttemptRecord] {
        match self {
            GatewayError::Exhausted { attempts, .. } | GatewayError::Rejected { attempts, .. } => {
                attempts
            }
            _ => &[],
        }
    }

    /// Replay and integrity failures are not transport failures; callers
    /// must not paper over them.
    pub fn is_replay_error(&self) -> bool {
        matches!(
            self,
            GatewayError::ReplayMiss { .. } | GatewayError::Integrity { .. }
        )
    }
}
