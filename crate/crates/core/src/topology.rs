//! Per-question pipelines for the two executor/analyst topologies and late
//! fusion of analyst answers.
//!
//! * Global pooling: `n1 * n2` executors feed one aggregated context, which
//!   `n2` independent analysts read.
//! * Stratified ensemble: `n2` independent subgroups of `n1` executors, each
//!   with its own context and analyst.
//!
//! Either way the final answer is a plurality vote over the `n2` calibrated
//! analyst answers.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use futures::future::join_all;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::agents::{
    aggregate_context, AggregatedContext, AnalystBackend, AnalystDraft, BackendError,
    ContextBudget, ExecutorBackend, ExecutorPool, ExecutorTrace, RunSlot,
};
use crate::domain::{AnswerLabel, Question, SamplingConfig};
use crate::error::{Error, Result};
use crate::postprocess::{deduplicate, query_key, CalibrationOutcome, Calibrator};
use crate::seeding::SeedSchedule;
use crate::voting::{plurality_vote, VoteResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyMode {
    #[serde(alias = "pooling")]
    GlobalPooling,
    #[serde(alias = "stratified")]
    StratifiedEnsemble,
}

impl TopologyMode {
    pub fn short_name(&self) -> &'static str {
        match self {
            TopologyMode::GlobalPooling => "pooling",
            TopologyMode::StratifiedEnsemble => "stratified",
        }
    }
}

impl std::str::FromStr for TopologyMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pooling" | "global_pooling" | "A" => Ok(TopologyMode::GlobalPooling),
            "stratified" | "stratified_ensemble" | "B" => Ok(TopologyMode::StratifiedEnsemble),
            other => Err(format!("unknown topology `{other}` (expected pooling or stratified)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub mode: TopologyMode,
    pub n1: usize,
    pub n2: usize,
    pub k: usize,
    pub budget: ContextBudget,
    pub sampling_exec: SamplingConfig,
    pub sampling_analyst: SamplingConfig,
}

impl TopologyConfig {
    pub const DEFAULT_K: usize = 10;

    pub fn new(mode: TopologyMode, n1: usize, n2: usize) -> Self {
        Self {
            mode,
            n1,
            n2,
            k: Self::DEFAULT_K,
            budget: ContextBudget::default(),
            sampling_exec: SamplingConfig::default(),
            sampling_analyst: SamplingConfig::default(),
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_budget(mut self, budget: ContextBudget) -> Self {
        self.budget = budget;
        self
    }

    /// Total executor invocations per question.
    pub fn n_total(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 || self.k == 0 {
            return Err(Error::InvalidParams(format!(
                "n1, n2 and k must be positive (got n1={}, n2={}, k={})",
                self.n1, self.n2, self.k
            )));
        }
        if self.budget.max_tokens == 0 {
            return Err(Error::InvalidParams("budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub subgroup: usize,
    pub executor_seeds: Vec<u64>,
    pub executor_tokens: Vec<u64>,
    pub failed_runs: usize,
    pub evidence_items: usize,
    pub total_tokens: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub contexts: Vec<ContextRecord>,
    pub analyst_seeds: Vec<u64>,
    pub calibrations: Vec<CalibrationOutcome>,
    /// Answer before a consistency rewrite, if one happened.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup_original: Option<AnswerLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Final per-question output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub question_id: String,
    pub query_key: String,
    pub answer: AnswerLabel,
    /// Raw text of the surfaced draft; the answer itself for open-ended items.
    pub answer_text: String,
    pub rationale: String,
    pub votes: VoteResult,
    pub mode: TopologyMode,
    pub drafts: Vec<AnalystDraft>,
    pub provenance: Provenance,
}

impl Decision {
    /// Placeholder for a question whose pipeline failed outright.
    pub fn failed(question: &Question, mode: TopologyMode, error: impl Into<String>) -> Self {
        Self {
            question_id: question.id.clone(),
            query_key: query_key(question),
            answer: AnswerLabel::Abstain,
            answer_text: String::new(),
            rationale: String::new(),
            votes: plurality_vote(&[AnswerLabel::Abstain]).expect("one ballot"),
            mode,
            drafts: Vec::new(),
            provenance: Provenance {
                error: Some(error.into()),
                ..Provenance::default()
            },
        }
    }
}

/// Plurality vote over calibrated answers only.
pub fn late_fusion(outcomes: &[CalibrationOutcome]) -> Result<VoteResult> {
    let ballots: Vec<AnswerLabel> = outcomes.iter().map(|o| o.label).collect();
    plurality_vote(&ballots)
}

#[derive(Debug, Default)]
pub struct Metrics {
    pub executor_calls: AtomicU64,
    pub analyst_calls: AtomicU64,
}

impl Metrics {
    pub fn executor_calls(&self) -> u64 {
        self.executor_calls.load(Ordering::SeqCst)
    }

    pub fn analyst_calls(&self) -> u64 {
        self.analyst_calls.load(Ordering::SeqCst)
    }
}

struct Counted<'a> {
    inner: &'a dyn ExecutorBackend,
    metrics: &'a Metrics,
}

#[async_trait::async_trait]
impl ExecutorBackend for Counted<'_> {
    async fn execute(
        &self,
        question: &Question,
        sampling: &SamplingConfig,
        slot: &RunSlot,
    ) -> std::result::Result<ExecutorTrace, BackendError> {
        self.metrics.executor_calls.fetch_add(1, Ordering::SeqCst);
        self.inner.execute(question, sampling, slot).await
    }
}

/// Outcome of one analyst slot.
struct Ballot {
    draft: AnalystDraft,
    calibration: CalibrationOutcome,
    seed: u64,
    failed: bool,
}

pub struct Orchestrator {
    executor: Arc<dyn ExecutorBackend>,
    analyst: Arc<dyn AnalystBackend>,
    calibrator: Arc<Calibrator>,
    schedule: SeedSchedule,
    parallelism: usize,
    metrics: Arc<Metrics>,
}

impl Orchestrator {
    pub fn new(
        executor: Arc<dyn ExecutorBackend>,
        analyst: Arc<dyn AnalystBackend>,
        calibrator: Arc<Calibrator>,
        master_seed: u64,
    ) -> Self {
        Self {
            executor,
            analyst,
            calibrator,
            schedule: SeedSchedule::new(master_seed),
            parallelism: 16,
            metrics: Arc::new(Metrics::default()),
        }
    }

    /// Maximum concurrent backend calls per executor pool.
    pub fn with_parallelism(mut self, parallelism: usize) -> Self {
        self.parallelism = parallelism.max(1);
        self
    }

    pub fn metrics(&self) -> &Arc<Metrics> {
        &self.metrics
    }

    pub fn schedule(&self) -> SeedSchedule {
        self.schedule
    }

    async fn gather(
        &self,
        question: &Question,
        n: usize,
        subgroup: usize,
        cfg: &TopologyConfig,
    ) -> Result<(AggregatedContext, ContextRecord)> {
        let counted = Counted {
            inner: self.executor.as_ref(),
            metrics: &self.metrics,
        };
        let pool = ExecutorPool {
            backend: &counted,
            schedule: self.schedule,
            parallelism: self.parallelism,
        };
        let traces = pool.run(question, n, subgroup, &cfg.sampling_exec).await?;
        let ctx = aggregate_context(&question.id, &traces, cfg.k, cfg.budget)?;
        let record = ContextRecord {
            subgroup,
            executor_seeds: (0..n)
                .map(|r| self.schedule.executor(&question.id, subgroup, r))
                .collect(),
            executor_tokens: traces.iter().map(|t| t.token_count).collect(),
            failed_runs: traces.iter().filter(|t| t.flagged.is_some()).count(),
            evidence_items: ctx.evidence.len(),
            total_tokens: ctx.total_tokens,
            truncated: ctx.truncated,
        };
        Ok((ctx, record))
    }

    async fn consult(
        &self,
        question: &Question,
        context: &AggregatedContext,
        analyst_index: usize,
        cfg: &TopologyConfig,
    ) -> Result<Ballot> {
        let seed = self.schedule.analyst(&question.id, analyst_index);
        let slot = RunSlot {
            subgroup: analyst_index,
            run_index: 0,
            replay_index: analyst_index as u32,
            seed,
        };
        self.metrics.analyst_calls.fetch_add(1, Ordering::SeqCst);
        let (draft, failed) = match self
            .analyst
            .analyze(question, context, &cfg.sampling_analyst, &slot)
            .await
        {
            Ok(draft) => (draft, false),
            Err(BackendError::Replay(reason)) => return Err(Error::Replay(reason)),
            Err(err) => (AnalystDraft::failed(&question.id, err.to_string()), true),
        };
        let calibration = self.calibrator.calibrate_format(&draft.raw_answer_text, question);
        Ok(Ballot {
            draft,
            calibration,
            seed,
            failed,
        })
    }

    fn fuse(
        &self,
        question: &Question,
        mode: TopologyMode,
        ballots: Vec<Ballot>,
        contexts: Vec<ContextRecord>,
    ) -> Result<Decision> {
        if ballots.iter().all(|b| b.failed) {
            return Err(Error::AllAnalystsFailed {
                question_id: question.id.clone(),
                runs: ballots.len(),
                last_error: ballots
                    .last()
                    .and_then(|b| b.draft.flagged.clone())
                    .unwrap_or_default(),
            });
        }
        let calibrations: Vec<CalibrationOutcome> =
            ballots.iter().map(|b| b.calibration.clone()).collect();
        let votes = late_fusion(&calibrations)?;
        let surfaced = ballots
            .iter()
            .position(|b| b.calibration.label == votes.winner && !b.failed)
            .or_else(|| ballots.iter().position(|b| !b.failed))
            .unwrap_or(0);
        Ok(Decision {
            question_id: question.id.clone(),
            query_key: query_key(question),
            answer: votes.winner,
            answer_text: ballots[surfaced].draft.raw_answer_text.clone(),
            rationale: ballots[surfaced].draft.rationale.clone(),
            votes,
            mode,
            provenance: Provenance {
                contexts,
                analyst_seeds: ballots.iter().map(|b| b.seed).collect(),
                calibrations,
                dedup_original: None,
                error: None,
            },
            drafts: ballots.into_iter().map(|b| b.draft).collect(),
        })
    }

    /// One pooled context over all `n1 * n2` executors, read by `n2`
    /// analysts.
    pub async fn run_global_pooling(&self, question: &Question, cfg: &TopologyConfig) -> Result<Decision> {
        if cfg.mode != TopologyMode::GlobalPooling {
            return Err(Error::Usage("run_global_pooling needs mode GlobalPooling".into()));
        }
        cfg.validate()?;
        let (ctx, record) = self.gather(question, cfg.n_total(), 0, cfg).await?;
        let ballots = join_all((0..cfg.n2).map(|i| self.consult(question, &ctx, i, cfg)))
            .await
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        self.fuse(question, cfg.mode, ballots, vec![record])
    }

    /// `n2` independent executor subgroups, each with its own context and
    /// analyst. A subgroup whose executors all fail casts an abstaining
    /// ballot.
    pub async fn run_stratified_ensemble(
        &self,
        question: &Question,
        cfg: &TopologyConfig,
    ) -> Result<Decision> {
        if cfg.mode != TopologyMode::StratifiedEnsemble {
            return Err(Error::Usage(
                "run_stratified_ensemble needs mode StratifiedEnsemble".into(),
            ));
        }
        cfg.validate()?;
        let outcomes = join_all((0..cfg.n2).map(|s| async move {
            match self.gather(question, cfg.n1, s, cfg).await {
                Ok((ctx, record)) => Ok(Some((self.consult(question, &ctx, s, cfg).await?, record))),
                Err(Error::AllExecutorsFailed { last_error, .. }) => {
                    Ok::<_, Error>(Some((
                        Ballot {
                            draft: AnalystDraft::failed(
                                &question.id,
                                format!("all executors failed: {last_error}"),
                            ),
                            calibration: CalibrationOutcome::abstain(),
                            seed: self.schedule.analyst(&question.id, s),
                            failed: true,
                        },
                        ContextRecord {
                            subgroup: s,
                            executor_seeds: (0..cfg.n1)
                                .map(|r| self.schedule.executor(&question.id, s, r))
                                .collect(),
                            executor_tokens: vec![0; cfg.n1],
                            failed_runs: cfg.n1,
                            evidence_items: 0,
                            total_tokens: 0,
                            truncated: false,
                        },
                    )))
                }
                Err(other) => Err(other),
            }
        }))
        .await;

        let mut ballots = Vec::with_capacity(cfg.n2);
        let mut records = Vec::with_capacity(cfg.n2);
        for outcome in outcomes {
            if let Some((ballot, record)) = outcome? {
                ballots.push(ballot);
                records.push(record);
            }
        }
        if records.iter().all(|r| r.failed_runs == cfg.n1) {
            return Err(Error::AllExecutorsFailed {
                question_id: question.id.clone(),
                runs: cfg.n_total(),
                last_error: ballots
                    .last()
                    .and_then(|b| b.draft.flagged.clone())
                    .unwrap_or_default(),
            });
        }
        self.fuse(question, cfg.mode, ballots, records)
    }

    pub async fn run_pipeline(&self, question: &Question, cfg: &TopologyConfig) -> Result<Decision> {
        match cfg.mode {
            TopologyMode::GlobalPooling => self.run_global_pooling(question, cfg).await,
            TopologyMode::StratifiedEnsemble => self.run_stratified_ensemble(question, cfg).await,
        }
    }

    /// Runs a batch with bounded question-level concurrency, then applies
    /// the consistency pass. Failed questions become abstaining decisions;
    /// replay failures abort the batch.
    pub async fn run_batch(
        &self,
        questions: &[Question],
        cfg: &TopologyConfig,
        concurrency: usize,
    ) -> Result<Vec<Decision>> {
        let mut results: Vec<(usize, Result<Decision>)> = stream::iter(questions.iter().enumerate())
            .map(|(i, q)| async move { (i, self.run_pipeline(q, cfg).await) })
            .buffer_unordered(concurrency.max(1))
            .collect()
            .await;
        results.sort_by_key(|(i, _)| *i);
        let mut decisions = Vec::with_capacity(questions.len());
        for (i, result) in results {
            match result {
                Ok(d) => decisions.push(d),
                Err(e @ Error::Replay(_)) => return Err(e),
                Err(e) => decisions.push(Decision::failed(&questions[i], cfg.mode, e.to_string())),
            }
        }
        Ok(deduplicate(decisions))
    }
}
