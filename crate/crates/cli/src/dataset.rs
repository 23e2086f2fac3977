//! Line-delimited JSON question files.
//!
//! One record per line:
//!
//! ```text
//! {"id": "q1", "question": "...", "kind": "multi_choice",
//!  "options": [{"label": "A", "text": "..."}, ...], "answer": "B"}
//! ```
//!
//! `kind` defaults to `multi_choice`; `answer` is optional.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use ensemblex::{Question, QuestionKind, QuestionOption};
use serde::Deserialize;
use tracing::warn;

use crate::{CliError, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    question: String,
    #[serde(default)]
    options: Vec<QuestionOption>,
    #[serde(default = "default_kind")]
    kind: QuestionKind,
    #[serde(default)]
    answer: Option<String>,
}

fn default_kind() -> QuestionKind {
    QuestionKind::MultiChoice
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub questions: Vec<Question>,
    /// Reference answers, where the file has them.
    pub answers: BTreeMap<String, String>,
}

impl Dataset {
    /// Known multi-choice answer letters, for the simulated backends.
    pub fn answer_letters(&self) -> BTreeMap<String, char> {
        self.questions
            .iter()
            .filter(|q| q.kind == QuestionKind::MultiChoice)
            .filter_map(|q| {
                let a = self.answers.get(&q.id)?;
                let mut chars = a.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Some((q.id.clone(), c)),
                    _ => None,
                }
            })
            .collect()
    }
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut data = Dataset::default();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("line {line_no}: {e}")))?;
        let question = Question::new(record.id, record.question, record.options, record.kind)
            .map_err(|e| CliError::Data(format!("line {line_no}: {e}")))?;
        if !seen.insert(question.id.clone()) {
            return Err(CliError::Data(format!(
                "line {line_no}: duplicate id `{}`",
                question.id
            )));
        }
        if let Some(answer) = record.answer {
            let answer = answer.trim().to_string();
            if question.kind == QuestionKind::MultiChoice {
                let valid = answer.len() == 1 && answer.chars().all(|c| question.has_label(c));
                if !valid {
                    return Err(CliError::Data(format!(
                        "line {line_no}: answer `{answer}` is not one of the option labels"
                    )));
                }
            }
            data.answers.insert(question.id.clone(), answer);
        }
        data.questions.push(question);
    }
    Ok(data)
}

pub fn ingest_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let data = parse_dataset(&text).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if data.questions.is_empty() {
        warn!(path = %path.display(), "dataset is empty");
    }
    Ok(data)
}
