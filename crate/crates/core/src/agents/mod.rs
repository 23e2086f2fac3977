//! Executor and analyst contracts, the executor fan-out, and the step that
//! fuses parallel executor traces into one analyst input.

mod aggregate;
pub mod live;
mod pool;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AnswerLabel, CanonicalToolCall, Question, SamplingConfig};

pub use aggregate::{aggregate_context, count_tokens, AggregatedContext, EvidenceItem};
pub use pool::{run_executor_pool, ExecutorPool};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolObservation {
    pub call: CanonicalToolCall,
    pub observation: String,
}

/// One complete executor run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutorTrace {
    pub run_index: usize,
    pub tool_calls: Vec<ToolObservation>,
    pub reasoning: String,
    pub chosen: AnswerLabel,
    pub token_count: u64,
    /// Set when the run failed or its output could not be parsed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flagged: Option<String>,
}

impl ExecutorTrace {
    pub fn failed(run_index: usize, reason: impl Into<String>) -> Self {
        Self {
            run_index,
            tool_calls: Vec::new(),
            reasoning: String::new(),
            chosen: AnswerLabel::Abstain,
            token_count: 0,
            flagged: Some(reason.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalystDraft {
    pub question_id: String,
    pub rationale: String,
    pub raw_answer_text: String,
    pub used_search: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flagged: Option<String>,
}

impl AnalystDraft {
    pub fn failed(question_id: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            question_id: question_id.into(),
            rationale: String::new(),
            raw_answer_text: String::new(),
            used_search: false,
            flagged: Some(reason.into()),
        }
    }
}

/// Upper bound on the size of an aggregated context, in whitespace tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBudget {
    pub max_tokens: usize,
}

impl ContextBudget {
    pub const DEFAULT_MAX_TOKENS: usize = 12_000;

    pub fn new(max_tokens: usize) -> crate::Result<Self> {
        if max_tokens == 0 {
            return Err(crate::Error::InvalidParams(
                "context budget must be at least 1 token".into(),
            ));
        }
        Ok(Self { max_tokens })
    }
}

impl Default for ContextBudget {
    fn default() -> Self {
        Self {
            max_tokens: Self::DEFAULT_MAX_TOKENS,
        }
    }
}

/// Identifies one backend invocation within a pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSlot {
    pub subgroup: usize,
    pub run_index: usize,
    /// Distinguishes repeated samples of the same prompt in the replay cache.
    pub replay_index: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    /// Transient or exhausted transport failure. The caller degrades the run.
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    /// Replay miss or cache corruption. Must not be papered over.
    #[error("replay failure: {0}")]
    Replay(String),
}

#[async_trait]
pub trait ExecutorBackend: Send + Sync {
    async fn execute(
        &self,
        question: &Question,
        sampling: &SamplingConfig,
        slot: &RunSlot,
    ) -> Result<ExecutorTrace, BackendError>;
}

#[async_trait]
pub trait AnalystBackend: Send + Sync {
    async fn analyze(
        &self,
        question: &Question,
        context: &AggregatedContext,
        sampling: &SamplingConfig,
        slot: &RunSlot,
    ) -> Result<AnalystDraft, BackendError>;
}
