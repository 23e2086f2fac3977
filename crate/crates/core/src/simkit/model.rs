use std::collections::BTreeMap;
use std::sync::Arc;

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AccuracyEstimate, SimParams};
use crate::agents::{
    AggregatedContext, AnalystBackend, AnalystDraft, BackendError, ExecutorBackend, ExecutorTrace,
    RunSlot, ToolObservation,
};
use crate::domain::{AnswerLabel, CanonicalToolCall, Question, SamplingConfig};
use crate::error::Result;
use crate::postprocess::Calibrator;
use crate::seeding::derive_seed;
use crate::topology::{Orchestrator, TopologyConfig};

/// Evidence item `0` is the critical one; `1..=d` are distractors.
pub fn evidence_call(item: usize) -> CanonicalToolCall {
    let name = if item == 0 { "e".to_string() } else { format!("d{item}") };
    CanonicalToolCall {
        tool_name: "retrieve_evidence".into(),
        arguments: vec![("item".into(), name)],
    }
}

fn observation(item: usize) -> String {
    if item == 0 {
        "critical finding".into()
    } else {
        format!("distractor {item}")
    }
}

pub fn label_letters(options: usize) -> Vec<char> {
    ('A'..='Z').take(options).collect()
}

/// Truth with probability `accuracy`, otherwise a uniformly chosen other
/// label.
fn draw_answer(rng: &mut ChaCha8Rng, truth: char, labels: &[char], accuracy: f64) -> char {
    if labels.len() < 2 || rng.random_bool(accuracy) {
        return truth;
    }
    let wrong: Vec<char> = labels.iter().copied().filter(|&l| l != truth).collect();
    wrong[rng.random_range(0..wrong.len())]
}

/// One executor run: a single evidence retrieval and a chosen answer.
pub fn simulate_executor(truth: char, labels: &[char], params: &SimParams, seed: u64) -> ExecutorTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let item = if rng.random_bool(params.q) {
        0
    } else {
        rng.random_range(1..=params.distractors)
    };
    let chosen = draw_answer(&mut rng, truth, labels, params.executor_base_accuracy());
    ExecutorTrace {
        run_index: 0,
        tool_calls: vec![ToolObservation {
            call: evidence_call(item),
            observation: observation(item),
        }],
        reasoning: format!("retrieved one evidence item and leaned towards option {chosen}"),
        chosen: AnswerLabel::Choice(chosen),
        token_count: 10,
        flagged: None,
    }
}

/// One analyst draft over a context.
pub fn simulate_analyst(
    context: &AggregatedContext,
    truth: char,
    labels: &[char],
    params: &SimParams,
    seed: u64,
) -> AnalystDraft {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let has_critical = context.contains_call(&evidence_call(0));
    let accuracy = if has_critical { params.a_with } else { params.a_without };
    let answer = draw_answer(&mut rng, truth, labels, accuracy);
    let used_search = rng.random_bool(params.p_search);
    let rationale = format!(
        "Reviewed {} evidence item(s); critical finding {}.",
        context.evidence.len(),
        if has_critical { "present" } else { "absent" }
    );
    AnalystDraft {
        question_id: context.question_id.clone(),
        raw_answer_text: format!("{rationale}\nFinal answer: {answer}"),
        rationale,
        used_search,
        flagged: None,
    }
}

/// Ground truth per question id. Unknown ids get a label derived from the
/// id and the table seed, uniform over the question's options.
#[derive(Debug, Clone, Default)]
pub struct TruthTable {
    pub known: BTreeMap<String, char>,
    pub seed: u64,
}

impl TruthTable {
    pub fn new(seed: u64) -> Self {
        Self {
            known: BTreeMap::new(),
            seed,
        }
    }

    pub fn truth(&self, question: &Question) -> char {
        if let Some(&l) = self.known.get(&question.id) {
            if question.has_label(l) {
                return l;
            }
        }
        let n = question.options.len().max(1) as u64;
        let pick = derive_seed(self.seed, &[question.id.as_bytes(), b"truth"]) % n;
        question
            .options
            .get(pick as usize)
            .map(|o| o.label)
            .unwrap_or('A')
    }
}

fn question_labels(question: &Question) -> Vec<char> {
    question.options.iter().map(|o| o.label).collect()
}

pub struct SimExecutorBackend {
    pub params: SimParams,
    pub truth: Arc<TruthTable>,
}

#[async_trait]
impl ExecutorBackend for SimExecutorBackend {
    async fn execute(
        &self,
        question: &Question,
        _sampling: &SamplingConfig,
        slot: &RunSlot,
    ) -> Result<ExecutorTrace, BackendError> {
        let mut trace = simulate_executor(
            self.truth.truth(question),
            &question_labels(question),
            &self.params,
            slot.seed,
        );
        trace.run_index = slot.run_index;
        Ok(trace)
    }
}

pub struct SimAnalystBackend {
    pub params: SimParams,
    pub truth: Arc<TruthTable>,
}

#[async_trait]
impl AnalystBackend for SimAnalystBackend {
    async fn analyze(
        &self,
        question: &Question,
        context: &AggregatedContext,
        _sampling: &SamplingConfig,
        slot: &RunSlot,
    ) -> Result<AnalystDraft, BackendError> {
        Ok(simulate_analyst(
            context,
            self.truth.truth(question),
            &question_labels(question),
            &self.params,
            slot.seed,
        ))
    }
}

/// `count` synthetic multi-choice questions with `params.options` options.
pub fn simulated_questions(count: usize, params: &SimParams) -> Vec<Question> {
    (0..count)
        .map(|i| {
            let bodies = label_letters(params.options)
                .into_iter()
                .map(|l| format!("option {l} of item {i}"));
            Question::multi_choice(format!("sim-{i}"), format!("Simulated question {i}"), bodies)
                .expect("synthetic questions are valid")
        })
        .collect()
}

/// Runs the full pipeline with simulated backends over `questions`
/// synthetic questions and reports the fraction answered correctly.
pub async fn pipeline_accuracy(
    cfg: &TopologyConfig,
    params: &SimParams,
    questions: usize,
    concurrency: usize,
) -> Result<AccuracyEstimate> {
    params.validate()?;
    let batch = simulated_questions(questions, params);
    let truth = Arc::new(TruthTable::new(params.seed));
    let orchestrator = Orchestrator::new(
        Arc::new(SimExecutorBackend {
            params: *params,
            truth: truth.clone(),
        }),
        Arc::new(SimAnalystBackend {
            params: *params,
            truth: truth.clone(),
        }),
        Arc::new(Calibrator::default()),
        params.seed,
    );
    let decisions = orchestrator.run_batch(&batch, cfg, concurrency).await?;
    let correct = batch
        .iter()
        .zip(&decisions)
        .filter(|(q, d)| d.answer == AnswerLabel::Choice(truth.truth(q)))
        .count();
    Ok(AccuracyEstimate::from_successes(correct as u64, questions as u64))
}
