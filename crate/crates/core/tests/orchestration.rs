use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use ensemblex::agents::{aggregate_context, ToolObservation};
use ensemblex::domain::ArgValue;
use ensemblex::{
    plurality_vote, AggregatedContext, AnalystBackend, AnalystDraft, AnswerLabel, BackendError, Calibrator,
    ContextBudget, ExecutorBackend, ExecutorTrace, Orchestrator, Question, RunSlot, SamplingConfig, ToolCall,
    TopologyConfig, TopologyMode,
};
use proptest::prelude::*;

/// Executor that records its slots and reports one tool call naming its
/// subgroup.
#[derive(Default)]
struct TaggingExecutor {
    slots: Mutex<Vec<RunSlot>>,
}

#[async_trait]
impl ExecutorBackend for TaggingExecutor {
    async fn execute(
        &self,
        _question: &Question,
        _sampling: &SamplingConfig,
        slot: &RunSlot,
    ) -> Result<ExecutorTrace, BackendError> {
        self.slots.lock().unwrap().push(*slot);
        let call = ToolCall::new("lookup", vec![("group".into(), ArgValue::Int(slot.subgroup as i64))])
            .unwrap()
            .canonicalize();
        Ok(ExecutorTrace {
            run_index: slot.run_index,
            tool_calls: vec![ToolObservation {
                call,
                observation: format!("group {}", slot.subgroup),
            }],
            reasoning: format!("run {}", slot.run_index),
            chosen: AnswerLabel::Choice('A'),
            token_count: 5,
            flagged: None,
        })
    }
}

/// Analyst that records the evidence it was shown and answers B.
#[derive(Default)]
struct RecordingAnalyst {
    seen: Mutex<Vec<(RunSlot, Vec<String>)>>,
}

#[async_trait]
impl AnalystBackend for RecordingAnalyst {
    async fn analyze(
        &self,
        question: &Question,
        context: &AggregatedContext,
        _sampling: &SamplingConfig,
        slot: &RunSlot,
    ) -> Result<AnalystDraft, BackendError> {
        let observations = context.evidence.iter().map(|e| e.observation.clone()).collect();
        self.seen.lock().unwrap().push((*slot, observations));
        Ok(AnalystDraft {
            question_id: question.id.clone(),
            rationale: "looked it up".into(),
            raw_answer_text: "Final answer: B".into(),
            used_search: false,
            flagged: None,
        })
    }
}

fn question() -> Question {
    Question::multi_choice("q1", "Which drug?", ["one", "two", "three", "four"]).unwrap()
}

async fn run(mode: TopologyMode, n1: usize, n2: usize) -> (Arc<TaggingExecutor>, Arc<RecordingAnalyst>) {
    let executor = Arc::new(TaggingExecutor::default());
    let analyst = Arc::new(RecordingAnalyst::default());
    let orch = Orchestrator::new(executor.clone(), analyst.clone(), Arc::new(Calibrator::default()), 9);
    let cfg = TopologyConfig::new(mode, n1, n2).with_k(n1 * n2);
    let decision = orch.run_pipeline(&question(), &cfg).await.unwrap();
    assert_eq!(decision.answer, AnswerLabel::Choice('B'));
    assert_eq!(decision.votes.ballots(), n2);
    assert_eq!(orch.metrics().executor_calls(), (n1 * n2) as u64);
    assert_eq!(orch.metrics().analyst_calls(), n2 as u64);
    (executor, analyst)
}

#[tokio::test]
async fn stratified_analysts_see_only_their_subgroup() {
    let (executor, analyst) = run(TopologyMode::StratifiedEnsemble, 3, 4).await;
    let slots = executor.slots.lock().unwrap();
    let seeds: HashSet<u64> = slots.iter().map(|s| s.seed).collect();
    assert_eq!(seeds.len(), 12);
    for (slot, observations) in analyst.seen.lock().unwrap().iter() {
        assert_eq!(observations, &vec![format!("group {}", slot.subgroup)]);
    }
}

#[tokio::test]
async fn pooled_analysts_share_one_context() {
    let (executor, analyst) = run(TopologyMode::GlobalPooling, 3, 4).await;
    assert_eq!(executor.slots.lock().unwrap().len(), 12);
    let seen = analyst.seen.lock().unwrap();
    assert!(seen.windows(2).all(|w| w[0].1 == w[1].1));
    let subgroups: HashSet<usize> = seen.iter().map(|(s, _)| s.subgroup).collect();
    assert_eq!(subgroups.len(), 4);
}

#[tokio::test]
async fn same_seed_same_slots() {
    let (a, _) = run(TopologyMode::StratifiedEnsemble, 2, 2).await;
    let (b, _) = run(TopologyMode::StratifiedEnsemble, 2, 2).await;
    let key = |e: &TaggingExecutor| {
        let mut s: Vec<(usize, usize, u64)> = e.slots.lock().unwrap().iter().map(|s| (s.subgroup, s.run_index, s.seed)).collect();
        s.sort();
        s
    };
    assert_eq!(key(&a), key(&b));
}

fn label() -> impl Strategy<Value = AnswerLabel> {
    prop_oneof![
        4 => (0u8..6).prop_map(|i| AnswerLabel::Choice((b'A' + i) as char)),
        1 => Just(AnswerLabel::Abstain),
    ]
}

proptest! {
    #[test]
    fn vote_winner_has_maximal_count(ballots in prop::collection::vec(label(), 1..40)) {
        let v = plurality_vote(&ballots).unwrap();
        prop_assert_eq!(v.ballots(), ballots.len());
        let best = v.tally.values().copied().max().unwrap_or(0);
        match v.winner {
            AnswerLabel::Abstain => prop_assert!(v.tally.is_empty()),
            w => {
                prop_assert_eq!(v.tally[&w], best);
                prop_assert!(v.tally.iter().all(|(l, &c)| c < best || *l >= w));
            }
        }
    }

    #[test]
    fn context_stays_within_budget(
        calls in prop::collection::vec(prop::collection::vec(0i64..6, 0..5), 1..8),
        words in 0usize..30,
        k in 1usize..8,
        budget in 1usize..60,
    ) {
        let traces: Vec<ExecutorTrace> = calls
            .iter()
            .enumerate()
            .map(|(i, ids)| ExecutorTrace {
                run_index: i,
                tool_calls: ids
                    .iter()
                    .map(|&id| ToolObservation {
                        call: ToolCall::new("t", vec![("id".into(), ArgValue::Int(id))]).unwrap().canonicalize(),
                        observation: "seen it".into(),
                    })
                    .collect(),
                reasoning: vec!["w"; words].join(" "),
                chosen: AnswerLabel::Choice('A'),
                token_count: 1,
                flagged: None,
            })
            .collect();
        let ctx = aggregate_context("q", &traces, k, ContextBudget::new(budget).unwrap()).unwrap();
        prop_assert!(ctx.total_tokens <= budget);
        prop_assert!(ctx.evidence.len() <= k);
        prop_assert!(ctx.evidence.windows(2).all(|w| w[0].count >= w[1].count));
    }
}
