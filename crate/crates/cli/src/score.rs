//! Exact-match scoring of multi-choice rows against an answer key.
//! Open-ended rows are counted but not scored.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use ensemblex::QuestionKind;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::submission::SubmissionRow;
use crate::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct KindScore {
    pub total: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub abstained: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScoreReport {
    /// Scored (multi-choice) rows.
    pub total: usize,
    pub correct: usize,
    pub incorrect: usize,
    /// Rows submitted with an empty choice.
    pub abstained: usize,
    /// Percentage of scored rows answered correctly.
    pub accuracy: f64,
    /// Rows present in the submission but not scored.
    pub unscored_open_ended: usize,
    pub per_kind: BTreeMap<String, KindScore>,
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "multi-choice exact-match accuracy: {:.3}%", self.accuracy)?;
        writeln!(
            f,
            "scored {} | correct {} | incorrect {} | abstained {}",
            self.total, self.correct, self.incorrect, self.abstained
        )?;
        write!(f, "open-ended rows (not scored): {}", self.unscored_open_ended)
    }
}

fn kind_name(kind: QuestionKind) -> &'static str {
    match kind {
        QuestionKind::MultiChoice => "multi_choice",
        QuestionKind::OpenEnded => "open_ended",
    }
}

pub fn score(rows: &[SubmissionRow], key: &Dataset) -> Result<ScoreReport> {
    let mut report = ScoreReport::default();
    let mut seen = HashSet::new();
    for row in rows {
        if !seen.insert(row.id.as_str()) {
            return Err(CliError::Data(format!("submission has duplicate id `{}`", row.id)));
        }
        let question = key
            .questions
            .iter()
            .find(|q| q.id == row.id)
            .ok_or_else(|| CliError::Data(format!("submission id `{}` is not in the key", row.id)))?;
        let bucket = report.per_kind.entry(kind_name(question.kind).into()).or_default();
        bucket.total += 1;
        if question.kind == QuestionKind::OpenEnded {
            report.unscored_open_ended += 1;
            continue;
        }
        let expected = key
            .answers
            .get(&row.id)
            .ok_or_else(|| CliError::Data(format!("key has no answer for `{}`", row.id)))?;
        report.total += 1;
        if row.choice.trim().is_empty() {
            report.abstained += 1;
            bucket.abstained += 1;
        } else if row.choice.trim() == expected {
            report.correct += 1;
            bucket.correct += 1;
        } else {
            report.incorrect += 1;
            bucket.incorrect += 1;
        }
    }
    report.accuracy = if report.total == 0 {
        0.0
    } else {
        100.0 * report.correct as f64 / report.total as f64
    };
    Ok(report)
}
