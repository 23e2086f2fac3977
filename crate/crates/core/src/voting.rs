//! Plurality voting and frequency ranking used by every self-consistency
//! step.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::agents::ExecutorTrace;
use crate::domain::{AnswerLabel, CanonicalToolCall};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteResult {
    pub winner: AnswerLabel,
    /// Counts of non-abstaining ballots.
    pub tally: BTreeMap<AnswerLabel, usize>,
    pub abstentions: usize,
    pub tie_broken: bool,
}

impl VoteResult {
    pub fn ballots(&self) -> usize {
        self.tally.values().sum::<usize>() + self.abstentions
    }
}

/// Modal label among non-abstaining ballots. Ties go to the alphabetically
/// smallest label. If every ballot abstains, the winner is `Abstain`.
pub fn plurality_vote(ballots: &[AnswerLabel]) -> Result<VoteResult> {
    if ballots.is_empty() {
        return Err(Error::Usage("plurality_vote needs at least one ballot".into()));
    }
    let mut tally = BTreeMap::new();
    let mut abstentions = 0;
    for b in ballots {
        if b.is_abstain() {
            abstentions += 1;
        } else {
            *tally.entry(*b).or_insert(0usize) += 1;
        }
    }
    let Some(&top) = tally.values().max() else {
        return Ok(VoteResult {
            winner: AnswerLabel::Abstain,
            tally,
            abstentions,
            tie_broken: false,
        });
    };
    let mut leaders = tally.iter().filter(|(_, &c)| c == top).map(|(l, _)| *l);
    // BTreeMap iterates in label order, so the first leader is the smallest.
    let winner = leaders.next().expect("max exists");
    let tie_broken = leaders.next().is_some();
    Ok(VoteResult {
        winner,
        tally,
        abstentions,
        tie_broken,
    })
}

/// Every distinct item with its count, by descending count; equal counts keep
/// first-occurrence order.
pub fn rank_by_frequency<T: Eq + Hash + Clone>(items: &[T]) -> Vec<(T, usize)> {
    let mut slot: HashMap<&T, usize> = HashMap::new();
    let mut ranked: Vec<(T, usize)> = Vec::new();
    for item in items {
        match slot.get(item) {
            Some(&i) => ranked[i].1 += 1,
            None => {
                slot.insert(item, ranked.len());
                ranked.push((item.clone(), 1));
            }
        }
    }
    // Stable sort keeps first-occurrence order within equal counts.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked
}

pub fn top_k_by_frequency(items: &[CanonicalToolCall], k: usize) -> Vec<(CanonicalToolCall, usize)> {
    let mut ranked = rank_by_frequency(items);
    ranked.truncate(k);
    ranked
}

/// The trace backing the plurality choice: among traces whose chosen answer
/// equals the vote winner, the one with the fewest tokens (earliest on ties).
pub fn modal_trace_select(traces: &[ExecutorTrace]) -> Result<&ExecutorTrace> {
    let ballots: Vec<AnswerLabel> = traces.iter().map(|t| t.chosen).collect();
    let vote = plurality_vote(&ballots)?;
    traces
        .iter()
        .filter(|t| t.chosen == vote.winner)
        .min_by_key(|t| t.token_count)
        .ok_or_else(|| Error::Usage("no trace matches the vote winner".into()))
}
