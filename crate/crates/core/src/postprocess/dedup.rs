use std::collections::HashMap;

use crate::domain::{AnswerLabel, Question};
use crate::topology::Decision;
use crate::voting::plurality_vote;

fn squash_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Identity of a query for consistency purposes: question text and options
/// with whitespace runs collapsed. Ids are deliberately not part of it.
pub fn query_key(question: &Question) -> String {
    let mut key = squash_whitespace(&question.text);
    for opt in &question.options {
        key.push('\u{1f}');
        key.push(opt.label);
        key.push('\u{1e}');
        key.push_str(&squash_whitespace(&opt.body));
    }
    key
}

/// Rewrites every group of decisions sharing a query key to the group's
/// plurality answer. The surfaced text, rationale and votes come from the
/// first group member that already held the winning answer. Order and length
/// are preserved; applying it twice changes nothing further.
pub fn deduplicate(mut decisions: Vec<Decision>) -> Vec<Decision> {
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, d) in decisions.iter().enumerate() {
        groups.entry(d.query_key.as_str()).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() > 1).collect();
    groups.sort();

    for members in groups {
        let answers: Vec<AnswerLabel> = members.iter().map(|&i| decisions[i].answer).collect();
        let winner = plurality_vote(&answers)
            .expect("groups are non-empty")
            .winner;
        let rep = *members
            .iter()
            .find(|&&i| decisions[i].answer == winner)
            .expect("winner comes from the group");
        let (answer_text, rationale, votes) = {
            let r = &decisions[rep];
            (r.answer_text.clone(), r.rationale.clone(), r.votes.clone())
        };
        for &i in &members {
            let d = &mut decisions[i];
            if d.answer != winner || d.answer_text != answer_text || d.rationale != rationale {
                if d.provenance.dedup_original.is_none() {
                    d.provenance.dedup_original = Some(d.answer);
                }
                d.answer = winner;
                d.answer_text = answer_text.clone();
                d.rationale = rationale.clone();
                d.votes = votes.clone();
            }
        }
    }
    decisions
}
