//! The `run` command: dataset in, submission and provenance out.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ensemblex::agents::live::{LiveAnalyst, LiveExecutor};
use ensemblex::agents::{AnalystBackend, ExecutorBackend};
use ensemblex::simkit::{SimAnalystBackend, SimExecutorBackend, SimParams, TruthTable};
use ensemblex::{deduplicate, Calibrator, Decision, Error, Orchestrator, Question};
use ensemblex_gateway::{CacheMode, Gateway, HttpTransport, ResponseCache, Transport};
use futures::stream::{self, StreamExt};
use tracing::{info, warn};

use crate::config::{BackendConfig, RunConfig};
use crate::dataset::{ingest_dataset, Dataset};
use crate::journal::{journal_path, load_journal, JournalEntry, JournalWriter};
use crate::submission::{resolve, write_provenance, write_submission, ProvenanceRecord, Resolved};
use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Reuse finished questions from the journal next to the output.
    pub resume: bool,
    /// Serve every model call from the cache; a miss is an error.
    pub strict_replay: bool,
}

pub struct RunOutcome {
    pub dataset: Dataset,
    pub decisions: Vec<Decision>,
    pub resolved: Vec<Resolved>,
    /// Requests that reached the transport; zero for simulated runs.
    pub network_operations: u64,
    /// Questions taken from the journal instead of being recomputed.
    pub resumed: usize,
}

pub fn provenance_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.jsonl");
    out.with_file_name(name)
}

struct Backends {
    executor: Arc<dyn ExecutorBackend>,
    analyst: Arc<dyn AnalystBackend>,
    gateway: Option<Arc<Gateway>>,
}

fn build_backends(
    cfg: &RunConfig,
    opts: &RunOptions,
    dataset: &Dataset,
    transport: Option<Arc<dyn Transport>>,
) -> Result<Backends> {
    match &cfg.backend {
        BackendConfig::Simulated { sim } => {
            let truth = Arc::new(TruthTable {
                known: dataset.answer_letters(),
                seed: cfg.seed,
            });
            let params = SimParams {
                seed: cfg.seed,
                ..*sim
            };
            Ok(Backends {
                executor: Arc::new(SimExecutorBackend {
                    params,
                    truth: truth.clone(),
                }),
                analyst: Arc::new(SimAnalystBackend { params, truth }),
                gateway: None,
            })
        }
        BackendConfig::Live(live) => {
            let mode = if opts.strict_replay {
                CacheMode::StrictReplay
            } else {
                live.cache_mode
            };
            let transport = transport.unwrap_or_else(|| Arc::new(HttpTransport::new()));
            let mut gateway =
                Gateway::new(cfg.endpoints.clone(), transport).with_retry_policy(live.retry.clone());
            match (&live.cache_dir, mode) {
                (_, CacheMode::Off) => {}
                (Some(dir), mode) => {
                    let cache = ResponseCache::open(dir)
                        .map_err(|e| CliError::Transport(format!("opening cache: {e}")))?;
                    gateway = gateway.with_cache(Arc::new(cache), mode);
                }
                (None, mode) => {
                    return Err(CliError::Config(format!("cache mode {mode:?} needs a cache_dir")))
                }
            }
            let gateway = Arc::new(gateway);
            Ok(Backends {
                executor: Arc::new(LiveExecutor {
                    gateway: gateway.clone(),
                    endpoint_id: live.executor_endpoint.clone(),
                    max_output_tokens: live.max_output_tokens,
                }),
                analyst: Arc::new(LiveAnalyst {
                    gateway: gateway.clone(),
                    endpoint_id: live.analyst_endpoint.clone(),
                    max_output_tokens: live.max_output_tokens,
                    search: live.analyst_search,
                }),
                gateway: Some(gateway),
            })
        }
    }
}

/// Runs every question and returns the fused, de-duplicated decisions
/// without writing the submission. The journal is written when `journal`
/// is given.
pub async fn execute(
    cfg: &RunConfig,
    opts: &RunOptions,
    journal: Option<&Path>,
    transport: Option<Arc<dyn Transport>>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let topology = cfg.topology.to_config()?;
    let dataset = ingest_dataset(cfg.dataset.as_deref().expect("validated"))?;
    let calibrator = Arc::new(match &cfg.rules {
        Some(path) => Calibrator::load(path)?,
        None => Calibrator::default(),
    });
    let backends = build_backends(cfg, opts, &dataset, transport)?;
    let orchestrator = Orchestrator::new(
        backends.executor,
        backends.analyst,
        calibrator,
        cfg.seed,
    )
    .with_parallelism(cfg.parallelism);

    let mut finished: HashMap<String, Decision> = match (opts.resume, journal) {
        (true, Some(path)) => load_journal(path)?,
        _ => HashMap::new(),
    };
    finished.retain(|id, _| dataset.questions.iter().any(|q| &q.id == id));
    let resumed = finished.len();
    if resumed > 0 {
        info!(resumed, "reusing journaled questions");
    }

    let writer = match journal {
        Some(path) => Some(JournalWriter::open(path, opts.resume).await?),
        None => None,
    };
    let sender = writer.as_ref().map(JournalWriter::sender);

    let pending: Vec<&Question> = dataset
        .questions
        .iter()
        .filter(|q| !finished.contains_key(&q.id))
        .collect();
    let total = pending.len();
    let mut results = stream::iter(pending)
        .map(|q| {
            let orchestrator = &orchestrator;
            let topology = &topology;
            async move { (q, orchestrator.run_pipeline(q, topology).await) }
        })
        .buffer_unordered(cfg.parallelism);
    let mut done = 0usize;
    while let Some((question, result)) = results.next().await {
        let decision = match result {
            Ok(d) => d,
            Err(e @ Error::Replay(_)) => {
                drop(results);
                drop(sender);
                if let Some(w) = writer {
                    w.finish().await?;
                }
                return Err(CliError::Transport(e.to_string()));
            }
            Err(e) => {
                warn!(question = %question.id, error = %e, "question failed; recording ABSTAIN");
                Decision::failed(question, topology.mode, e.to_string())
            }
        };
        if let Some(tx) = &sender {
            let _ = tx.send(JournalEntry {
                question_id: question.id.clone(),
                decision: decision.clone(),
            });
        }
        finished.insert(question.id.clone(), decision);
        done += 1;
        if done % 50 == 0 || done == total {
            info!(done, total, "questions finished");
        }
    }
    drop(results);
    drop(sender);
    if let Some(w) = writer {
        w.finish().await?;
    }

    let ordered: Vec<Decision> = dataset
        .questions
        .iter()
        .map(|q| finished.remove(&q.id).expect("every question finished"))
        .collect();
    let decisions = deduplicate(ordered);
    let resolved = dataset
        .questions
        .iter()
        .zip(&decisions)
        .map(|(q, d)| resolve(q, d, cfg.abstain_policy))
        .collect();
    let m = orchestrator.metrics();
    info!(
        executor_calls = m.executor_calls(),
        analyst_calls = m.analyst_calls(),
        "run complete"
    );
    Ok(RunOutcome {
        dataset,
        decisions,
        resolved,
        network_operations: backends.gateway.map_or(0, |g| g.network_operations()),
        resumed,
    })
}

fn backend_name(cfg: &RunConfig) -> &'static str {
    match cfg.backend {
        BackendConfig::Simulated { .. } => "simulated",
        BackendConfig::Live(_) => "live",
    }
}

/// Runs the batch and writes the submission plus its provenance file.
pub async fn run(
    cfg: &RunConfig,
    opts: &RunOptions,
    transport: Option<Arc<dyn Transport>>,
) -> Result<RunOutcome> {
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("no output path given (--out or `out`)".into()))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let outcome = execute(cfg, opts, Some(&journal_path(&out)), transport).await?;

    let rows: Vec<_> = outcome.resolved.iter().map(|r| r.row.clone()).collect();
    write_submission(&out, &rows)?;

    let topology = cfg.topology.to_config()?;
    let rules_version = match &cfg.rules {
        Some(p) => Calibrator::load(p)?.version(),
        None => Calibrator::default().version(),
    };
    let mut records = vec![ProvenanceRecord::Run {
        mode: topology.mode.short_name(),
        n1: topology.n1,
        n2: topology.n2,
        k: topology.k,
        budget_tokens: topology.budget.max_tokens,
        seed: cfg.seed,
        backend: backend_name(cfg),
        rules_version,
        abstain_policy: cfg.abstain_policy,
        note: matches!(cfg.backend, BackendConfig::Simulated { .. })
            .then_some(SimParams::ILLUSTRATIVE_NOTE),
    }];
    for (d, r) in outcome.decisions.iter().zip(&outcome.resolved) {
        records.push(ProvenanceRecord::Question {
            id: &d.question_id,
            submitted_choice: &r.row.choice,
            abstain_fallback: r.fallback,
            decision: d,
        });
    }
    write_provenance(&provenance_path(&out), &records)?;
    Ok(outcome)
}
