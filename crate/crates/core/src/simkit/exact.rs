//! Exact accuracy by enumerating count profiles instead of sequences.

use super::model::{evidence_call, label_letters, simulate_executor};
use super::{AccuracyEstimate, SimParams};
use crate::agents::{aggregate_context, ToolObservation};
use crate::error::{Error, Result};
use crate::topology::{TopologyConfig, TopologyMode};

/// Upper bound on the number of profiles one exact evaluation may visit.
pub const EXACT_WORK_LIMIT: u128 = 5_000_000;

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of ways to split `n` into `parts` non-negative counts.
fn profile_count(n: usize, parts: usize) -> u128 {
    binomial((n + parts - 1) as u128, (parts - 1) as u128)
}

/// Calls `visit` with every count vector of length `parts` summing to `n`.
fn for_each_profile(n: usize, parts: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(rest: usize, slot: usize, counts: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if slot + 1 == counts.len() {
            counts[slot] = rest;
            visit(counts);
            return;
        }
        for c in 0..=rest {
            counts[slot] = c;
            rec(rest - c, slot + 1, counts, visit);
        }
    }
    let mut counts = vec![0; parts];
    rec(n, 0, &mut counts, visit);
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        out[i] = out[i - 1] + (i as f64).ln();
    }
    out
}

/// Probability of one count profile when the first category has
/// probability `first` and the remaining `counts.len() - 1` share `rest`
/// equally.
fn profile_probability(counts: &[usize], first: f64, rest: f64, lnf: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let others = counts.len() - 1;
    let ln_coeff = lnf[n] - counts.iter().map(|&c| lnf[c]).sum::<f64>();
    let each = if others == 0 { 0.0 } else { rest / others as f64 };
    ln_coeff.exp() * first.powi(counts[0] as i32) * each.powi((n - counts[0]) as i32)
}

/// Probability that the critical item is among the `k_eff` highest-ranked
/// evidence items after `runs` retrievals. Items tied with it are ordered
/// by first occurrence, which is uniform over the tied items by symmetry.
pub fn retention_probability(runs: usize, k_eff: usize, params: &SimParams) -> (f64, f64) {
    let lnf = ln_factorials(runs);
    let (mut retained, mut mass) = (0.0, 0.0);
    for_each_profile(runs, params.distractors + 1, &mut |c| {
        let w = profile_probability(c, params.q, 1.0 - params.q, &lnf);
        mass += w;
        let critical = c[0];
        if critical == 0 || k_eff == 0 {
            return;
        }
        let above = c[1..].iter().filter(|&&x| x > critical).count();
        let tied = c[1..].iter().filter(|&&x| x == critical).count();
        if above < k_eff {
            let slots = (k_eff - above).min(tied + 1);
            retained += w * slots as f64 / (tied + 1) as f64;
        }
    });
    (retained, mass)
}

/// Probability that a plurality vote over `ballots` independent answers,
/// each correct with probability `p` and otherwise uniform over the other
/// `options - 1` labels, picks the truth. The truth label is uniform over
/// positions, so an alphabetical tie-break wins for it with probability
/// one over the number of tied leaders.
pub fn vote_accuracy(ballots: usize, p: f64, options: usize) -> (f64, f64) {
    let lnf = ln_factorials(ballots);
    let (mut acc, mut mass) = (0.0, 0.0);
    for_each_profile(ballots, options, &mut |c| {
        let w = profile_probability(c, p, 1.0 - p, &lnf);
        mass += w;
        let top = *c.iter().max().expect("non-empty");
        if c[0] == top {
            let leaders = c.iter().filter(|&&x| x == top).count();
            acc += w / leaders as f64;
        }
    });
    (acc, mass)
}

/// Number of evidence lines that survive both the `k` cut and the token
/// budget for simulated traces.
pub fn effective_k(cfg: &TopologyConfig, params: &SimParams) -> Result<usize> {
    let labels = label_letters(params.options);
    let distinct = cfg.k.min(params.distractors + 1);
    let traces: Vec<_> = (0..distinct)
        .map(|item| {
            let mut t = simulate_executor(labels[0], &labels, params, item as u64);
            t.run_index = item;
            t.tool_calls = vec![ToolObservation {
                call: evidence_call(item),
                observation: t.tool_calls[0].observation.clone(),
            }];
            t
        })
        .collect();
    // Observations differ only in wording, not length.
    let ctx = aggregate_context("probe", &traces, cfg.k, cfg.budget)?;
    Ok(ctx.evidence.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactBreakdown {
    pub accuracy: f64,
    /// Probability that one context retains the critical item.
    pub retention: f64,
    pub effective_k: usize,
    /// Total probability of the enumerated evidence profiles (should be 1).
    pub evidence_mass: f64,
    /// Total probability of the enumerated ballot profiles (should be 1).
    pub ballot_mass: f64,
}

pub fn exact_breakdown(cfg: &TopologyConfig, params: &SimParams) -> Result<ExactBreakdown> {
    cfg.validate()?;
    params.validate()?;
    let runs = match cfg.mode {
        TopologyMode::GlobalPooling => cfg.n_total(),
        TopologyMode::StratifiedEnsemble => cfg.n1,
    };
    let work = profile_count(runs, params.distractors + 1) + 2 * profile_count(cfg.n2, params.options);
    if work > EXACT_WORK_LIMIT {
        return Err(Error::Capacity {
            work,
            limit: EXACT_WORK_LIMIT,
        });
    }
    let k_eff = effective_k(cfg, params)?;
    let (retention, evidence_mass) = retention_probability(runs, k_eff, params);
    let (accuracy, ballot_mass) = match cfg.mode {
        TopologyMode::GlobalPooling => {
            // One shared context: condition on whether it kept the item.
            let (with, m1) = vote_accuracy(cfg.n2, params.a_with, params.options);
            let (without, m2) = vote_accuracy(cfg.n2, params.a_without, params.options);
            (retention * with + (1.0 - retention) * without, m1.min(m2))
        }
        TopologyMode::StratifiedEnsemble => {
            // Independent contexts make each ballot an independent draw.
            let per_ballot = retention * params.a_with + (1.0 - retention) * params.a_without;
            vote_accuracy(cfg.n2, per_ballot, params.options)
        }
    };
    Ok(ExactBreakdown {
        accuracy,
        retention,
        effective_k: k_eff,
        evidence_mass,
        ballot_mass,
    })
}

/// Exact probability that the pipeline's final answer is correct.
pub fn exact_accuracy(cfg: &TopologyConfig, params: &SimParams) -> Result<AccuracyEstimate> {
    exact_breakdown(cfg, params).map(|b| AccuracyEstimate::exact(b.accuracy))
}
