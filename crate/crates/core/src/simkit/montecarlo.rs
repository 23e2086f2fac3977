//! Sampling estimators. Trials are split into a fixed number of shards with
//! seeds derived from the master seed, so results do not depend on the
//! thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exact::{effective_k, vote_accuracy};
use super::{AccuracyEstimate, SimParams};
use crate::error::{Error, Result};
use crate::seeding::derive_seed;
use crate::topology::{TopologyConfig, TopologyMode};
use crate::voting::rank_by_frequency;

const SHARDS: u64 = 64;

/// Largest ballot count for which `sc_curve` enumerates exactly.
pub const SC_EXACT_MAX_N: usize = 9;

/// Runs `trials` Bernoulli trials across shards and counts successes.
fn sharded(trials: u64, seed: u64, tag: &[u8], trial: impl Fn(&mut ChaCha8Rng) -> bool + Sync) -> u64 {
    (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let n = trials / SHARDS + u64::from(shard < trials % SHARDS);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[tag, &shard.to_le_bytes()]));
            (0..n).filter(|_| trial(&mut rng)).count() as u64
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

fn draw_ballot(rng: &mut ChaCha8Rng, truth: usize, options: usize, accuracy: f64) -> usize {
    if rng.random_bool(accuracy) {
        truth
    } else {
        let wrong = rng.random_range(0..options - 1);
        if wrong >= truth {
            wrong + 1
        } else {
            wrong
        }
    }
}

/// Plurality winner over label indices; ties go to the smallest index.
fn vote_winner(counts: &[usize]) -> usize {
    let top = *counts.iter().max().expect("non-empty");
    counts.iter().position(|&c| c == top).expect("max exists")
}

/// Samples the model directly: evidence sequences per context, top-k by
/// frequency with first-occurrence ties, then analyst ballots and a vote.
pub fn monte_carlo_accuracy(
    cfg: &TopologyConfig,
    params: &SimParams,
    trials: u64,
    seed: u64,
) -> Result<AccuracyEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    cfg.validate()?;
    params.validate()?;
    let k_eff = effective_k(cfg, params)?;
    let (contexts, runs) = match cfg.mode {
        TopologyMode::GlobalPooling => (1, cfg.n_total()),
        TopologyMode::StratifiedEnsemble => (cfg.n2, cfg.n1),
    };
    let m = params.options;
    let successes = sharded(trials, seed, b"model", |rng| {
        let truth = rng.random_range(0..m);
        let mut kept = Vec::with_capacity(contexts);
        for _ in 0..contexts {
            let items: Vec<usize> = (0..runs)
                .map(|_| {
                    if rng.random_bool(params.q) {
                        0
                    } else {
                        rng.random_range(1..=params.distractors)
                    }
                })
                .collect();
            let ranked = rank_by_frequency(&items);
            kept.push(ranked.iter().take(k_eff).any(|(i, _)| *i == 0));
        }
        let mut counts = vec![0; m];
        for analyst in 0..cfg.n2 {
            let has = kept[analyst.min(contexts - 1)];
            let acc = if has { params.a_with } else { params.a_without };
            counts[draw_ballot(rng, truth, m, acc)] += 1;
        }
        vote_winner(&counts) == truth
    });
    Ok(AccuracyEstimate::from_successes(successes, trials))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScPoint {
    pub n: usize,
    pub estimate: AccuracyEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScCurve {
    pub points: Vec<ScPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Accuracy of a plurality vote over `n` independent ballots, each correct
/// with probability `p`, for every `n` in `n_values`. Exact up to
/// [`SC_EXACT_MAX_N`] ballots, sampled with `trials` trials beyond.
pub fn sc_curve(n_values: &[usize], p: f64, options: usize, trials: u64, seed: u64) -> Result<ScCurve> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParams(format!("p = {p} is outside [0, 1]")));
    }
    if options < 2 {
        return Err(Error::InvalidParams("at least two options are required".into()));
    }
    if n_values.contains(&0) {
        return Err(Error::InvalidParams("ballot counts must be positive".into()));
    }
    let needs_mc = n_values.iter().any(|&n| n > SC_EXACT_MAX_N);
    if needs_mc && trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    let warning = (p <= 1.0 / options as f64).then(|| {
        format!("per-run accuracy {p} is at or below chance (1/{options}); voting cannot help")
    });
    let points = n_values
        .iter()
        .map(|&n| {
            let estimate = if n <= SC_EXACT_MAX_N {
                AccuracyEstimate::exact(vote_accuracy(n, p, options).0)
            } else {
                let successes = sharded(trials, seed, &(n as u64).to_le_bytes(), |rng| {
                    let truth = rng.random_range(0..options);
                    let mut counts = vec![0; options];
                    for _ in 0..n {
                        counts[draw_ballot(rng, truth, options, p)] += 1;
                    }
                    vote_winner(&counts) == truth
                });
                AccuracyEstimate::from_successes(successes, trials)
            };
            ScPoint { n, estimate }
        })
        .collect();
    Ok(ScCurve { points, warning })
}
