//! Executor/analyst ensemble orchestration with evidence aggregation,
//! late fusion, deterministic post-processing, and a simulation kit for
//! checking voting and fusion behaviour.

pub mod agents;
pub mod domain;
pub mod error;
pub mod postprocess;
pub mod seeding;
pub mod simkit;
pub mod topology;
pub mod voting;

pub use agents::{
    aggregate_context, AggregatedContext, AnalystBackend, AnalystDraft, BackendError,
    ContextBudget, ExecutorBackend, ExecutorTrace, RunSlot,
};
pub use domain::{AnswerLabel, CanonicalToolCall, Question, QuestionKind, QuestionOption, SamplingConfig, ToolCall};
pub use error::{Error, Result};
pub use postprocess::{deduplicate, CalibrationOutcome, Calibrator};
pub use seeding::SeedSchedule;
pub use topology::{Decision, Orchestrator, TopologyConfig, TopologyMode};
pub use voting::{plurality_vote, VoteResult};
