//! Submission table (`id,prediction,choice,reasoning`) and the per-question
//! provenance log.

use std::io::Write;
use std::path::Path;

use ensemblex::{AnswerLabel, Decision, Question, QuestionKind};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

/// What to submit for a multi-choice question that ended in ABSTAIN.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstainPolicy {
    #[default]
    FirstOption,
    LeaveBlank,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRow {
    pub id: String,
    pub prediction: String,
    pub choice: String,
    pub reasoning: String,
}

/// A submission row plus whether the abstain policy had to fill it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolved {
    pub row: SubmissionRow,
    pub fallback: Option<AbstainPolicy>,
}

pub fn resolve(question: &Question, decision: &Decision, policy: AbstainPolicy) -> Resolved {
    let reasoning = decision.rationale.clone();
    if question.kind == QuestionKind::OpenEnded {
        return Resolved {
            row: SubmissionRow {
                id: question.id.clone(),
                prediction: decision.answer_text.clone(),
                choice: String::new(),
                reasoning,
            },
            fallback: None,
        };
    }
    let (label, fallback) = match (decision.answer, policy) {
        (AnswerLabel::Choice(c), _) => (Some(c), None),
        (AnswerLabel::Abstain, AbstainPolicy::FirstOption) => {
            (question.options.first().map(|o| o.label), Some(policy))
        }
        (AnswerLabel::Abstain, AbstainPolicy::LeaveBlank) => (None, Some(policy)),
    };
    let (prediction, choice) = match label {
        Some(l) => (
            question.option_body(l).unwrap_or_default().to_string(),
            l.to_string(),
        ),
        None => (String::new(), String::new()),
    };
    Resolved {
        row: SubmissionRow {
            id: question.id.clone(),
            prediction,
            choice,
            reasoning,
        },
        fallback,
    }
}

pub fn write_submission(path: &Path, rows: &[SubmissionRow]) -> Result<()> {
    let io = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(io)?;
    w.write_record(["id", "prediction", "choice", "reasoning"]).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_submission(path: &Path) -> Result<Vec<SubmissionRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| CliError::Data(format!("{} row {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[derive(Debug, Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum ProvenanceRecord<'a> {
    Run {
        mode: &'a str,
        n1: usize,
        n2: usize,
        k: usize,
        budget_tokens: usize,
        seed: u64,
        backend: &'a str,
        rules_version: u32,
        abstain_policy: AbstainPolicy,
        #[serde(skip_serializing_if = "Option::is_none")]
        note: Option<&'a str>,
    },
    Question {
        id: &'a str,
        submitted_choice: &'a str,
        #[serde(skip_serializing_if = "Option::is_none")]
        abstain_fallback: Option<AbstainPolicy>,
        decision: &'a Decision,
    },
}

/// Writes one JSON object per line; no timestamps, so equal runs give equal
/// files.
pub fn write_provenance(path: &Path, records: &[ProvenanceRecord<'_>]) -> Result<()> {
    let mut out = Vec::new();
    for record in records {
        serde_json::to_writer(&mut out, record).expect("provenance serializes");
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(&out).map_err(|e| CliError::io(path, e))
}
