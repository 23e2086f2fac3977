use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ContextBudget, ExecutorTrace};
use crate::domain::CanonicalToolCall;
use crate::error::{Error, Result};
use crate::voting::{modal_trace_select, rank_by_frequency};

/// Token measure: whitespace-delimited words.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub call: CanonicalToolCall,
    pub observation: String,
    pub count: usize,
}

impl EvidenceItem {
    fn render_line(&self) -> String {
        format!("[{}x] {} -> {}", self.count, self.call, self.observation)
    }
}

/// Evidence handed to an analyst: ranked tool results plus one
/// representative reasoning trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedContext {
    pub question_id: String,
    pub evidence: Vec<EvidenceItem>,
    pub representative_trace: String,
    pub total_tokens: usize,
    pub truncated: bool,
}

impl AggregatedContext {
    /// Serialized form that the token budget is measured on and that live
    /// analysts receive.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for item in &self.evidence {
            let _ = writeln!(out, "{}", item.render_line());
        }
        if !self.evidence.is_empty() && !self.representative_trace.is_empty() {
            out.push('\n');
        }
        out.push_str(&self.representative_trace);
        out
    }

    pub fn contains_call(&self, call: &CanonicalToolCall) -> bool {
        self.evidence.iter().any(|e| &e.call == call)
    }
}

/// Fuses executor traces into one context.
///
/// Traces are ordered by `run_index` first, so first-occurrence tie-breaks do
/// not depend on completion order. Evidence is the top-`k` canonical calls by
/// frequency, each with the observation of its first occurrence. When the
/// rendered context exceeds the budget, evidence is dropped from the
/// lowest-count end; the representative trace is only tail-truncated once no
/// evidence is left.
pub fn aggregate_context(
    question_id: &str,
    traces: &[ExecutorTrace],
    k: usize,
    budget: ContextBudget,
) -> Result<AggregatedContext> {
    if traces.is_empty() {
        return Err(Error::Usage("aggregate_context needs at least one trace".into()));
    }
    let mut ordered: Vec<&ExecutorTrace> = traces.iter().collect();
    ordered.sort_by_key(|t| t.run_index);

    let mut calls = Vec::new();
    let mut first_observation: HashMap<&CanonicalToolCall, &str> = HashMap::new();
    for obs in ordered.iter().flat_map(|t| &t.tool_calls) {
        calls.push(obs.call.clone());
        first_observation
            .entry(&obs.call)
            .or_insert(obs.observation.as_str());
    }
    let mut ranked = rank_by_frequency(&calls);
    ranked.truncate(k);
    let mut evidence: Vec<EvidenceItem> = ranked
        .into_iter()
        .map(|(call, count)| EvidenceItem {
            observation: first_observation[&call].to_string(),
            call,
            count,
        })
        .collect();

    let owned: Vec<ExecutorTrace> = ordered.into_iter().cloned().collect();
    let mut representative = modal_trace_select(&owned)?.reasoning.clone();

    let line_tokens: Vec<usize> = evidence
        .iter()
        .map(|e| count_tokens(&e.render_line()))
        .collect();
    let mut evidence_tokens: usize = line_tokens.iter().sum();
    let trace_tokens = count_tokens(&representative);
    let mut truncated = false;

    while evidence_tokens + trace_tokens > budget.max_tokens && !evidence.is_empty() {
        evidence.pop();
        evidence_tokens -= line_tokens[evidence.len()];
        truncated = true;
    }
    if evidence_tokens + trace_tokens > budget.max_tokens {
        let keep = budget.max_tokens.saturating_sub(evidence_tokens);
        representative = representative
            .split_whitespace()
            .take(keep)
            .collect::<Vec<_>>()
            .join(" ");
        truncated = true;
    }

    let mut ctx = AggregatedContext {
        question_id: question_id.to_string(),
        evidence,
        representative_trace: representative,
        total_tokens: 0,
        truncated,
    };
    ctx.total_tokens = count_tokens(&ctx.render());
    Ok(ctx)
}
