//! Shared domain types.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    MultiChoice,
    OpenEnded,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuestionOption {
    pub label: char,
    #[serde(alias = "text")]
    pub body: String,
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub options: Vec<QuestionOption>,
    pub kind: QuestionKind,
}

impl Question {
    /// Builds a validated question.
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        options: Vec<QuestionOption>,
        kind: QuestionKind,
    ) -> Result<Self> {
        let q = Self {
            id: id.into(),
            text: text.into(),
            options,
            kind,
        };
        q.validate()?;
        Ok(q)
    }

    /// Multi-choice question with options labelled A, B, C, ... in order.
    pub fn multi_choice<S: Into<String>>(
        id: impl Into<String>,
        text: impl Into<String>,
        bodies: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let options = bodies
            .into_iter()
            .zip('A'..='Z')
            .map(|(body, label)| QuestionOption {
                label,
                body: body.into(),
            })
            .collect();
        Self::new(id, text, options, QuestionKind::MultiChoice)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidQuestion {
                id: self.id.clone(),
                reason,
            })
        };
        if self.id.is_empty() {
            return fail("empty id".into());
        }
        for opt in &self.options {
            if !opt.label.is_ascii_uppercase() {
                return fail(format!("option label `{}` is not a letter A-Z", opt.label));
            }
        }
        if self.options.windows(2).any(|w| w[0].label >= w[1].label) {
            return fail("option labels must be unique and ascending".into());
        }
        match self.kind {
            QuestionKind::MultiChoice if self.options.len() < 2 => {
                fail(format!("multi-choice needs at least 2 options, got {}", self.options.len()))
            }
            QuestionKind::OpenEnded if !self.options.is_empty() => {
                fail("open-ended questions take no options".into())
            }
            _ => Ok(()),
        }
    }

    pub fn labels(&self) -> impl Iterator<Item = AnswerLabel> + '_ {
        self.options.iter().map(|o| AnswerLabel::Choice(o.label))
    }

    pub fn has_label(&self, label: char) -> bool {
        self.options.iter().any(|o| o.label == label)
    }

    pub fn option_body(&self, label: char) -> Option<&str> {
        self.options
            .iter()
            .find(|o| o.label == label)
            .map(|o| o.body.as_str())
    }
}

/// An option letter, or the abstention sentinel used for parse failures.
///
/// Ordering puts letters alphabetically and `Abstain` last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum AnswerLabel {
    Choice(char),
    Abstain,
}

impl AnswerLabel {
    pub const ABSTAIN_TEXT: &'static str = "ABSTAIN";

    pub fn is_abstain(&self) -> bool {
        matches!(self, AnswerLabel::Abstain)
    }

    pub fn letter(&self) -> Option<char> {
        match self {
            AnswerLabel::Choice(c) => Some(*c),
            AnswerLabel::Abstain => None,
        }
    }
}

impl fmt::Display for AnswerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerLabel::Choice(c) => write!(f, "{c}"),
            AnswerLabel::Abstain => f.write_str(Self::ABSTAIN_TEXT),
        }
    }
}

impl From<AnswerLabel> for String {
    fn from(l: AnswerLabel) -> Self {
        l.to_string()
    }
}

impl TryFrom<String> for AnswerLabel {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_uppercase() => Ok(AnswerLabel::Choice(c)),
            _ if s == Self::ABSTAIN_TEXT => Ok(AnswerLabel::Abstain),
            _ => Err(format!("`{s}` is not an answer label")),
        }
    }
}

/// A tool argument value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArgValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl ArgValue {
    /// Text form used for canonical comparison. Strings are trimmed and
    /// lower-cased; scalars use their plain decimal rendering.
    fn canonical_text(&self) -> String {
        match self {
            ArgValue::Bool(b) => b.to_string(),
            ArgValue::Int(i) => i.to_string(),
            ArgValue::Float(x) => x.to_string(),
            ArgValue::Str(s) => s.trim().to_lowercase(),
        }
    }
}

impl From<&str> for ArgValue {
    fn from(s: &str) -> Self {
        ArgValue::Str(s.to_string())
    }
}

impl From<i64> for ArgValue {
    fn from(i: i64) -> Self {
        ArgValue::Int(i)
    }
}

/// A raw tool invocation as reported by an executor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool_name: String,
    pub arguments: Vec<(String, ArgValue)>,
}

impl ToolCall {
    pub fn new(tool_name: impl Into<String>, arguments: Vec<(String, ArgValue)>) -> Result<Self> {
        let call = Self {
            tool_name: tool_name.into(),
            arguments,
        };
        if call.tool_name.is_empty() {
            return Err(Error::Usage("tool name must be non-empty".into()));
        }
        let mut keys: Vec<&str> = call.arguments.iter().map(|(k, _)| k.as_str()).collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Usage(format!(
                "duplicate argument key in call to `{}`",
                call.tool_name
            )));
        }
        Ok(call)
    }

    pub fn canonicalize(&self) -> CanonicalToolCall {
        canonicalize_tool_call(self)
    }
}

/// Tool call in canonical form: name lower-cased, arguments sorted by key,
/// values rendered to trimmed lower-case text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalToolCall {
    pub tool_name: String,
    pub arguments: Vec<(String, String)>,
}

impl fmt::Display for CanonicalToolCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.tool_name)?;
        for (i, (k, v)) in self.arguments.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str(")")
    }
}

impl From<CanonicalToolCall> for ToolCall {
    fn from(c: CanonicalToolCall) -> Self {
        ToolCall {
            tool_name: c.tool_name,
            arguments: c
                .arguments
                .into_iter()
                .map(|(k, v)| (k, ArgValue::Str(v)))
                .collect(),
        }
    }
}

pub fn canonicalize_tool_call(raw: &ToolCall) -> CanonicalToolCall {
    let mut arguments: Vec<(String, String)> = raw
        .arguments
        .iter()
        .map(|(k, v)| (k.clone(), v.canonical_text()))
        .collect();
    arguments.sort();
    CanonicalToolCall {
        tool_name: raw.tool_name.to_lowercase(),
        arguments,
    }
}

/// Sampling settings for one agent role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub n_samples: u32,
}

impl SamplingConfig {
    pub const DEFAULT_TEMPERATURE: f64 = 0.8;

    pub fn new(temperature: f64, n_samples: u32) -> Result<Self> {
        if !(0.0..=2.0).contains(&temperature) {
            return Err(Error::InvalidParams(format!(
                "temperature {temperature} outside [0, 2]"
            )));
        }
        if n_samples == 0 {
            return Err(Error::InvalidParams("n_samples must be at least 1".into()));
        }
        Ok(Self {
            temperature,
            n_samples,
        })
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            temperature: Self::DEFAULT_TEMPERATURE,
            n_samples: 1,
        }
    }
}
