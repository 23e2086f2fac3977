//! Backends that talk to remote chat endpoints through the gateway.
//!
//! The executor endpoint is expected to run the tool-using agent remotely
//! and reply with a JSON object:
//!
//! ```text
//! {"tool_calls": [{"tool": "...", "arguments": {...}, "observation": "..."}],
//!  "reasoning": "...", "answer": "B"}
//! ```
//!
//! Replies that do not parse become flagged abstaining traces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use async_trait::async_trait;
use ensemblex_gateway::{Gateway, GatewayError, Message, ModelRequest};
use serde::Deserialize;

use super::{
    count_tokens, AggregatedContext, AnalystBackend, AnalystDraft, BackendError, ExecutorBackend,
    ExecutorTrace, RunSlot, ToolObservation,
};
use crate::domain::{AnswerLabel, ArgValue, Question, QuestionKind, SamplingConfig, ToolCall};

pub const EXECUTOR_SYSTEM_PROMPT: &str = "You are a biomedical tool-use agent. Decompose the \
question into sub-queries, call the tools you need, and report every tool call with its \
observation. Reply with a single JSON object with keys tool_calls, reasoning and answer.";

pub const ANALYST_SYSTEM_PROMPT: &str = "You are a clinical analyst. Using the aggregated \
evidence below, reason step by step, discard irrelevant evidence, and end with a line of the \
form `Final answer: <letter>`.";

fn render_question(question: &Question) -> String {
    let mut out = question.text.clone();
    if question.kind == QuestionKind::MultiChoice {
        out.push('\n');
        for opt in &question.options {
            let _ = write!(out, "\n{}. {}", opt.label, opt.body);
        }
    }
    out
}

fn map_gateway_error(err: GatewayError) -> BackendError {
    if err.is_replay_error() {
        BackendError::Replay(err.to_string())
    } else {
        BackendError::Unavailable(err.to_string())
    }
}

#[derive(Deserialize)]
struct ExecutorReply {
    #[serde(default)]
    tool_calls: Vec<ReplyCall>,
    #[serde(default)]
    reasoning: String,
    #[serde(default)]
    answer: String,
}

#[derive(Deserialize)]
struct ReplyCall {
    tool: String,
    #[serde(default)]
    arguments: BTreeMap<String, ArgValue>,
    #[serde(default)]
    observation: String,
}

/// Extracts the outermost `{...}` span, tolerating prose or code fences
/// around it.
fn json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

fn parse_choice(answer: &str, question: &Question) -> AnswerLabel {
    let trimmed = answer.trim().trim_matches(|c: char| "().[] ".contains(c));
    let mut chars = trimmed.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if question.has_label(c.to_ascii_uppercase()) => {
            AnswerLabel::Choice(c.to_ascii_uppercase())
        }
        _ => AnswerLabel::Abstain,
    }
}

/// Parses an executor reply. Malformed output yields a flagged trace.
pub fn parse_executor_reply(
    content: &str,
    question: &Question,
    run_index: usize,
    usage_tokens: u64,
) -> ExecutorTrace {
    let token_count = if usage_tokens > 0 {
        usage_tokens
    } else {
        count_tokens(content) as u64
    };
    let reply: ExecutorReply = match json_object(content).map(serde_json::from_str) {
        Some(Ok(reply)) => reply,
        Some(Err(e)) => {
            let mut t = ExecutorTrace::failed(run_index, format!("malformed executor output: {e}"));
            t.token_count = token_count;
            return t;
        }
        None => {
            let mut t = ExecutorTrace::failed(run_index, "executor output has no JSON object");
            t.token_count = token_count;
            return t;
        }
    };
    let mut tool_calls = Vec::with_capacity(reply.tool_calls.len());
    for call in reply.tool_calls {
        match ToolCall::new(call.tool, call.arguments.into_iter().collect()) {
            Ok(raw) => tool_calls.push(ToolObservation {
                call: raw.canonicalize(),
                observation: call.observation,
            }),
            Err(e) => {
                let mut t = ExecutorTrace::failed(run_index, format!("malformed tool call: {e}"));
                t.token_count = token_count;
                return t;
            }
        }
    }
    ExecutorTrace {
        run_index,
        tool_calls,
        reasoning: reply.reasoning,
        chosen: parse_choice(&reply.answer, question),
        token_count,
        flagged: None,
    }
}

pub struct LiveExecutor {
    pub gateway: Arc<Gateway>,
    pub endpoint_id: String,
    pub max_output_tokens: u32,
}

impl LiveExecutor {
    pub fn request(&self, question: &Question, sampling: &SamplingConfig, slot: &RunSlot) -> ModelRequest {
        ModelRequest::new(
            self.endpoint_id.clone(),
            vec![
                Message::system(EXECUTOR_SYSTEM_PROMPT),
                Message::user(render_question(question)),
            ],
        )
        .with_temperature(sampling.temperature)
        .with_max_output_tokens(self.max_output_tokens)
        .with_replay_index(slot.replay_index)
    }
}

#[async_trait]
impl ExecutorBackend for LiveExecutor {
    async fn execute(
        &self,
        question: &Question,
        sampling: &SamplingConfig,
        slot: &RunSlot,
    ) -> Result<ExecutorTrace, BackendError> {
        let request = self.request(question, sampling, slot);
        let response = self.gateway.request(&request).await.map_err(map_gateway_error)?;
        Ok(parse_executor_reply(
            &response.content,
            question,
            slot.run_index,
            response.usage_tokens,
        ))
    }
}

pub struct LiveAnalyst {
    pub gateway: Arc<Gateway>,
    pub endpoint_id: String,
    pub max_output_tokens: u32,
    /// Requests the endpoint's search capability.
    pub search: bool,
}

impl LiveAnalyst {
    pub fn request(
        &self,
        question: &Question,
        context: &AggregatedContext,
        sampling: &SamplingConfig,
        slot: &RunSlot,
    ) -> ModelRequest {
        let user = format!(
            "Question:\n{}\n\nAggregated evidence:\n{}",
            render_question(question),
            context.render()
        );
        let mut req = ModelRequest::new(
            self.endpoint_id.clone(),
            vec![Message::system(ANALYST_SYSTEM_PROMPT), Message::user(user)],
        )
        .with_temperature(sampling.temperature)
        .with_max_output_tokens(self.max_output_tokens)
        .with_replay_index(slot.replay_index);
        if self.search {
            req = req.with_capability("search");
        }
        req
    }
}

#[async_trait]
impl AnalystBackend for LiveAnalyst {
    async fn analyze(
        &self,
        question: &Question,
        context: &AggregatedContext,
        sampling: &SamplingConfig,
        slot: &RunSlot,
    ) -> Result<AnalystDraft, BackendError> {
        let request = self.request(question, context, sampling, slot);
        let response = self.gateway.request(&request).await.map_err(map_gateway_error)?;
        Ok(AnalystDraft {
            question_id: question.id.clone(),
            rationale: response.content.clone(),
            raw_answer_text: response.content,
            used_search: self.search,
            flagged: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> Question {
        Question::multi_choice("q", "Which drug?", ["aspirin", "warfarin", "heparin"]).unwrap()
    }

    #[test]
    fn parses_well_formed_reply() {
        let content = r#"Here you go:
```json
{"tool_calls": [{"tool": "FDA_Label", "arguments": {"drug": " Aspirin "}, "observation": "bleeding risk"}],
 "reasoning": "aspirin raises bleeding risk", "answer": "b"}
```"#;
        let t = parse_executor_reply(content, &q(), 3, 120);
        assert_eq!(t.run_index, 3);
        assert_eq!(t.chosen, AnswerLabel::Choice('B'));
        assert_eq!(t.token_count, 120);
        assert_eq!(t.tool_calls[0].call.tool_name, "fda_label");
        assert_eq!(t.tool_calls[0].call.arguments[0].1, "aspirin");
        assert!(t.flagged.is_none());
    }

    #[test]
    fn malformed_reply_is_flagged_abstain() {
        let t = parse_executor_reply("I could not decide.", &q(), 0, 0);
        assert!(t.chosen.is_abstain());
        assert!(t.tool_calls.is_empty());
        assert!(t.flagged.is_some());
        assert_eq!(t.token_count, 4);

        let t = parse_executor_reply(r#"{"tool_calls": 5}"#, &q(), 0, 0);
        assert!(t.flagged.is_some());
    }

    #[test]
    fn out_of_range_answer_abstains() {
        let t = parse_executor_reply(r#"{"answer": "E"}"#, &q(), 0, 1);
        assert!(t.chosen.is_abstain());
        assert!(t.flagged.is_none());
    }
}
