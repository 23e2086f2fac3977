//! Stochastic executor/analyst models and accuracy estimators.
//!
//! Model: every executor run retrieves exactly one evidence item, the
//! critical item `E` with probability `q` and otherwise one of `d`
//! distractors uniformly. An analyst answers correctly with probability
//! `a_with` if `E` survived into its context and `a_without` otherwise;
//! wrong answers are uniform over the remaining labels.
//!
//! The default parameters are illustrative only and not fitted to any real
//! model.

mod exact;
mod model;
mod montecarlo;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use exact::{
    effective_k, exact_accuracy, exact_breakdown, retention_probability, vote_accuracy,
    ExactBreakdown, EXACT_WORK_LIMIT,
};
pub use model::{
    evidence_call, label_letters, pipeline_accuracy, simulate_analyst, simulate_executor,
    simulated_questions, SimAnalystBackend, SimExecutorBackend, TruthTable,
};
pub use montecarlo::{monte_carlo_accuracy, sc_curve, ScCurve, ScPoint, SC_EXACT_MAX_N};

/// Parameters of the simulated retrieval/analysis model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Number of answer options (M).
    pub options: usize,
    /// Number of distractor evidence types (d).
    pub distractors: usize,
    /// Probability that one executor run retrieves the critical item.
    pub q: f64,
    pub a_with: f64,
    pub a_without: f64,
    /// Accuracy of an executor's own chosen answer; defaults to `a_without`.
    pub executor_accuracy: Option<f64>,
    /// Probability that a simulated analyst reports using search.
    pub p_search: f64,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            options: 4,
            distractors: 2,
            q: 0.2,
            a_with: 0.95,
            a_without: 0.25,
            executor_accuracy: None,
            p_search: 0.0,
            seed: 0,
        }
    }
}

impl SimParams {
    pub const ILLUSTRATIVE_NOTE: &'static str =
        "simulation parameters are illustrative, not fitted to any real model";

    pub fn validate(&self) -> Result<()> {
        if !(2..=26).contains(&self.options) {
            return Err(Error::InvalidParams(format!(
                "options must be in 2..=26, got {}",
                self.options
            )));
        }
        if self.distractors == 0 {
            return Err(Error::InvalidParams("at least one distractor type is required".into()));
        }
        let probs = [
            ("q", self.q),
            ("a_with", self.a_with),
            ("a_without", self.a_without),
            ("executor_accuracy", self.executor_base_accuracy()),
            ("p_search", self.p_search),
        ];
        for (name, value) in probs {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidParams(format!("{name} = {value} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn executor_base_accuracy(&self) -> f64 {
        self.executor_accuracy.unwrap_or(self.a_without)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    Exact,
    MonteCarlo,
}

impl EstimateMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimateMethod::Exact => "exact",
            EstimateMethod::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEstimate {
    pub value: f64,
    /// Zero for exact values.
    pub stderr: f64,
    pub method: EstimateMethod,
    /// Zero for exact values.
    pub trials: u64,
}

impl AccuracyEstimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            method: EstimateMethod::Exact,
            trials: 0,
        }
    }

    /// Estimate from `successes` out of `trials` Bernoulli outcomes, with the
    /// unbiased sample variance.
    pub fn from_successes(successes: u64, trials: u64) -> Self {
        let n = trials as f64;
        let value = successes as f64 / n;
        let stderr = if trials > 1 {
            (value * (1.0 - value) / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            value,
            stderr,
            method: EstimateMethod::MonteCarlo,
            trials,
        }
    }
}
