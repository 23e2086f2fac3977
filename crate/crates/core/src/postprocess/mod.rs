//! Deterministic post-processing of analyst output: format calibration and
//! consistency across repeated questions.

mod calibrate;
mod dedup;

use serde::Deserialize;

pub use calibrate::{
    CalibrationMethod, CalibrationOutcome, CalibrationRule, Calibrator, DEFAULT_RULES,
};
pub use dedup::{deduplicate, query_key};

use crate::domain::{AnswerLabel, Question, QuestionKind, QuestionOption};

/// The regression corpus shipped with the crate, one JSON record per line.
pub const GOLDEN_CORPUS: &str = include_str!("../../data/calibration_golden.jsonl");

#[derive(Debug, Clone, Deserialize)]
pub struct GoldenCase {
    pub raw_text: String,
    pub options: Vec<String>,
    pub expected: AnswerLabel,
}

impl GoldenCase {
    pub fn question(&self, index: usize) -> Question {
        let options: Vec<QuestionOption> = self
            .options
            .iter()
            .zip('A'..='Z')
            .map(|(body, label)| QuestionOption {
                label,
                body: body.clone(),
            })
            .collect();
        let kind = if options.is_empty() {
            QuestionKind::OpenEnded
        } else {
            QuestionKind::MultiChoice
        };
        Question {
            id: format!("golden-{index}"),
            text: String::new(),
            options,
            kind,
        }
    }
}

pub fn parse_golden(text: &str) -> Result<Vec<GoldenCase>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

/// Runs a calibrator over a golden corpus; returns the failing cases as
/// `(index, expected, got)`.
pub fn run_golden(calibrator: &Calibrator, cases: &[GoldenCase]) -> Vec<(usize, AnswerLabel, AnswerLabel)> {
    cases
        .iter()
        .enumerate()
        .filter_map(|(i, case)| {
            let got = calibrator.calibrate_format(&case.raw_text, &case.question(i)).label;
            (got != case.expected).then_some((i, case.expected, got))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_corpus_passes() {
        let cases = parse_golden(GOLDEN_CORPUS).unwrap();
        assert_eq!(cases.len(), 20);
        let failures = run_golden(&Calibrator::default(), &cases);
        assert!(failures.is_empty(), "{failures:?}");
    }
}
