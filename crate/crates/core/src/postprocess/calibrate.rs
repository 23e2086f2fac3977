use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::domain::{AnswerLabel, Question, QuestionKind};
use crate::error::{Error, Result};

/// Rules shipped with the crate.
pub const DEFAULT_RULES: &str = include_str!("../../data/calibration_rules.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    PatternMatch,
    OptionTextFuzzy,
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub label: AnswerLabel,
    pub matched_rule: Option<String>,
    pub method: CalibrationMethod,
}

impl CalibrationOutcome {
    pub fn abstain() -> Self {
        Self {
            label: AnswerLabel::Abstain,
            matched_rule: None,
            method: CalibrationMethod::Abstain,
        }
    }
}

#[derive(Debug, Deserialize)]
struct RulesFile {
    version: u32,
    #[serde(default, rename = "rule")]
    rules: Vec<RuleSpec>,
}

#[derive(Debug, Deserialize)]
struct RuleSpec {
    id: String,
    priority: i64,
    pattern: String,
    capture: CaptureRef,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum CaptureRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone)]
pub struct CalibrationRule {
    pub id: String,
    pub priority: i64,
    pattern: Regex,
    capture: usize,
}

impl CalibrationRule {
    pub fn pattern(&self) -> &str {
        self.pattern.as_str()
    }

    fn first_valid(&self, text: &str, question: &Question) -> Option<char> {
        self.pattern.captures_iter(text).find_map(|caps| {
            let letter = caps.get(self.capture)?.as_str().chars().next()?;
            let letter = letter.to_ascii_uppercase();
            question.has_label(letter).then_some(letter)
        })
    }
}

/// Maps free-text analyst conclusions onto option labels.
#[derive(Debug, Clone)]
pub struct Calibrator {
    version: u32,
    rules: Vec<CalibrationRule>,
}

impl Default for Calibrator {
    fn default() -> Self {
        Self::from_toml(DEFAULT_RULES).expect("bundled rules are valid")
    }
}

/// True when `needle` occurs in `haystack` without alphanumeric characters
/// directly on either side.
fn contains_phrase(haystack: &str, needle: &str) -> bool {
    haystack.match_indices(needle).any(|(start, m)| {
        let before = haystack[..start].chars().next_back();
        let after = haystack[start + m.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

impl Calibrator {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: RulesFile =
            toml::from_str(text).map_err(|e| Error::Rules(format!("unparseable rules file: {e}")))?;
        let mut rules = Vec::with_capacity(file.rules.len());
        for spec in file.rules {
            let pattern = Regex::new(&spec.pattern)
                .map_err(|e| Error::Rules(format!("rule `{}`: {e}", spec.id)))?;
            let capture = match &spec.capture {
                CaptureRef::Index(i) if *i < pattern.captures_len() && *i > 0 => *i,
                CaptureRef::Name(name) => pattern
                    .capture_names()
                    .position(|n| n == Some(name.as_str()))
                    .ok_or_else(|| {
                        Error::Rules(format!("rule `{}` has no capture named `{name}`", spec.id))
                    })?,
                CaptureRef::Index(i) => {
                    return Err(Error::Rules(format!(
                        "rule `{}` refers to capture {i}, pattern has {}",
                        spec.id,
                        pattern.captures_len() - 1
                    )))
                }
            };
            rules.push(CalibrationRule {
                id: spec.id,
                priority: spec.priority,
                pattern,
                capture,
            });
        }
        rules.sort_by_key(|r| r.priority);
        if let Some(w) = rules.windows(2).find(|w| w[0].priority == w[1].priority) {
            return Err(Error::Rules(format!(
                "rules `{}` and `{}` share priority {}",
                w[0].id, w[1].id, w[0].priority
            )));
        }
        Ok(Self {
            version: file.version,
            rules,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Rules(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn rules(&self) -> &[CalibrationRule] {
        &self.rules
    }

    /// Rules in priority order; the first valid letter wins. Falls back to a
    /// unique case-insensitive option-body match, then abstains. Open-ended
    /// questions always abstain here; their text is passed through elsewhere.
    pub fn calibrate_format(&self, raw_answer_text: &str, question: &Question) -> CalibrationOutcome {
        if question.kind == QuestionKind::OpenEnded {
            return CalibrationOutcome::abstain();
        }
        for rule in &self.rules {
            if let Some(letter) = rule.first_valid(raw_answer_text, question) {
                return CalibrationOutcome {
                    label: AnswerLabel::Choice(letter),
                    matched_rule: Some(rule.id.clone()),
                    method: CalibrationMethod::PatternMatch,
                };
            }
        }

        let lowered = raw_answer_text.to_lowercase();
        let mut hits = question.options.iter().filter(|o| {
            let body = o.body.trim().to_lowercase();
            !body.is_empty() && contains_phrase(&lowered, &body)
        });
        match (hits.next(), hits.next()) {
            (Some(only), None) => CalibrationOutcome {
                label: AnswerLabel::Choice(only.label),
                matched_rule: Some("option-body".into()),
                method: CalibrationMethod::OptionTextFuzzy,
            },
            _ => CalibrationOutcome::abstain(),
        }
    }
}
