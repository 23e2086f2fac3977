//! Parameter sweeps over the simulation kit, written as a CSV table with
//! `#` comment lines on top.
//!
//! A sweep file lists grids; every combination becomes one row:
//!
//! ```toml
//! method = "auto"        # exact | monte_carlo | auto
//! trials = 100000
//! seed = 1
//! [params]               # base model parameters
//! options = 4
//! distractors = 2
//! [grid]
//! mode = ["pooling", "stratified"]
//! n1 = [2, 6]
//! n2 = [1, 3]
//! k = [1]                # optional axes default to the base values
//! ```

use std::path::Path;

use ensemblex::agents::ContextBudget;
use ensemblex::simkit::{exact_accuracy, monte_carlo_accuracy, sc_curve, AccuracyEstimate, SimParams};
use ensemblex::{Error, TopologyConfig, TopologyMode};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

pub const PRESETS: [&str; 2] = ["sc-curve", "fusion-compare"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMethod {
    Exact,
    MonteCarlo,
    /// Exact where tractable, sampled otherwise.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub mode: Vec<TopologyMode>,
    pub n1: Vec<usize>,
    pub n2: Vec<usize>,
    pub k: Option<Vec<usize>>,
    pub budget_tokens: Option<Vec<usize>>,
    pub q: Option<Vec<f64>>,
    pub a_with: Option<Vec<f64>>,
    pub a_without: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub method: SweepMethod,
    pub trials: u64,
    pub seed: u64,
    pub params: SimParams,
    pub grid: Grid,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            method: SweepMethod::Auto,
            trials: 100_000,
            seed: 0,
            params: SimParams::default(),
            grid: Grid::default(),
        }
    }
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: String,
    pub n1: usize,
    pub n2: usize,
    pub k: Option<usize>,
    pub q: Option<f64>,
    pub a_with: f64,
    pub a_without: f64,
    pub accuracy: f64,
    pub stderr: f64,
    pub method: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub notes: Vec<String>,
}

fn row(cfg: &TopologyConfig, p: &SimParams, est: AccuracyEstimate) -> SweepRow {
    SweepRow {
        mode: cfg.mode.short_name().into(),
        n1: cfg.n1,
        n2: cfg.n2,
        k: Some(cfg.k),
        q: Some(p.q),
        a_with: p.a_with,
        a_without: p.a_without,
        accuracy: est.value,
        stderr: est.stderr,
        method: est.method.as_str().into(),
    }
}

fn estimate(cfg: &TopologyConfig, p: &SimParams, spec: &SweepSpec) -> Result<AccuracyEstimate> {
    match spec.method {
        SweepMethod::Exact => Ok(exact_accuracy(cfg, p)?),
        SweepMethod::MonteCarlo => Ok(monte_carlo_accuracy(cfg, p, spec.trials, spec.seed)?),
        SweepMethod::Auto => match exact_accuracy(cfg, p) {
            Err(Error::Capacity { .. }) => Ok(monte_carlo_accuracy(cfg, p, spec.trials, spec.seed)?),
            other => Ok(other?),
        },
    }
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    let mut table = SweepTable {
        rows: Vec::new(),
        notes: vec![SimParams::ILLUSTRATIVE_NOTE.into()],
    };
    let base = spec.params;
    let g = &spec.grid;
    let axis = |values: &Option<Vec<f64>>, default: f64| values.clone().unwrap_or_else(|| vec![default]);
    let ks = g.k.clone().unwrap_or_else(|| vec![TopologyConfig::DEFAULT_K]);
    let budgets = g
        .budget_tokens
        .clone()
        .unwrap_or_else(|| vec![ContextBudget::DEFAULT_MAX_TOKENS]);
    let qs = axis(&g.q, base.q);
    let withs = axis(&g.a_with, base.a_with);
    let withouts = axis(&g.a_without, base.a_without);

    for &mode in &g.mode {
        for &n1 in &g.n1 {
            for &n2 in &g.n2 {
                for &k in &ks {
                    for &budget in &budgets {
                        for &q in &qs {
                            for &a_with in &withs {
                                for &a_without in &withouts {
                                    let mut cfg = TopologyConfig::new(mode, n1, n2).with_k(k);
                                    cfg.budget = ContextBudget::new(budget)?;
                                    let p = SimParams {
                                        q,
                                        a_with,
                                        a_without,
                                        ..base
                                    };
                                    let est = estimate(&cfg, &p, spec)?;
                                    table.rows.push(row(&cfg, &p, est));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if table.rows.is_empty() {
        table.notes.push("warning: the grid is empty; no rows written".into());
    }
    Ok(table)
}

/// Plurality-vote accuracy against the number of independent samples.
pub fn sc_curve_preset(trials: u64, seed: u64) -> Result<SweepTable> {
    let (p, options) = (0.7, 4);
    let curve = sc_curve(&[1, 3, 5, 10, 15, 20, 40, 60], p, options, trials, seed)?;
    let mut notes = vec![
        SimParams::ILLUSTRATIVE_NOTE.to_string(),
        format!("self-consistency curve: per-sample accuracy {p}, {options} options; n is in column n2"),
    ];
    notes.extend(curve.warning.map(|w| format!("warning: {w}")));
    let rows = curve
        .points
        .iter()
        .map(|pt| SweepRow {
            mode: "self_consistency".into(),
            n1: 1,
            n2: pt.n,
            k: None,
            q: None,
            a_with: p,
            a_without: p,
            accuracy: pt.estimate.value,
            stderr: pt.estimate.stderr,
            method: pt.estimate.method.as_str().into(),
        })
        .collect();
    Ok(SweepTable { rows, notes })
}

/// Pooled against stratified fusion at six executor runs per question.
pub fn fusion_compare_preset() -> Result<SweepTable> {
    let p = SimParams::default();
    let mut table = SweepTable {
        rows: Vec::new(),
        notes: vec![
            SimParams::ILLUSTRATIVE_NOTE.into(),
            format!(
                "fusion comparison: options {}, distractors {}, six executor runs, k = 1",
                p.options, p.distractors
            ),
        ],
    };
    for (mode, n1, n2) in [
        (TopologyMode::GlobalPooling, 6, 1),
        (TopologyMode::StratifiedEnsemble, 2, 3),
    ] {
        let cfg = TopologyConfig::new(mode, n1, n2).with_k(1);
        table.rows.push(row(&cfg, &p, exact_accuracy(&cfg, &p)?));
    }
    Ok(table)
}

pub fn preset(name: &str, trials: u64, seed: u64) -> Result<SweepTable> {
    match name {
        "sc-curve" => sc_curve_preset(trials, seed),
        "fusion-compare" => fusion_compare_preset(),
        other => Err(CliError::Usage(format!(
            "unknown preset `{other}` (available: {})",
            PRESETS.join(", ")
        ))),
    }
}

pub fn render_table(table: &SweepTable) -> Result<String> {
    let mut out = String::new();
    for note in &table.notes {
        out.push_str("# ");
        out.push_str(note);
        out.push('\n');
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record([
        "mode", "n1", "n2", "k", "q", "a_with", "a_without", "accuracy", "stderr", "method",
    ])
    .and_then(|_| table.rows.iter().try_for_each(|r| w.serialize(r)))
    .map_err(|e| CliError::Data(e.to_string()))?;
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

pub fn write_table(path: &Path, table: &SweepTable) -> Result<()> {
    std::fs::write(path, render_table(table)?).map_err(|e| CliError::io(path, e))
}
