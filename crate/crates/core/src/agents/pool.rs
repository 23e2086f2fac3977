use futures::stream::{self, StreamExt};
use tracing::warn;

use super::{BackendError, ExecutorBackend, ExecutorTrace, RunSlot};
use crate::domain::{Question, SamplingConfig};
use crate::error::{Error, Result};
use crate::seeding::SeedSchedule;

/// Fans one question out to `n1` executor runs with bounded concurrency.
pub struct ExecutorPool<'a> {
    pub backend: &'a dyn ExecutorBackend,
    pub schedule: SeedSchedule,
    pub parallelism: usize,
}

impl ExecutorPool<'_> {
    /// Runs `n1` executors for one subgroup. Output is ordered by run index
    /// regardless of completion order. Failed runs become flagged abstaining
    /// traces; only a failure of every run is an error. Replay failures abort.
    pub async fn run(
        &self,
        question: &Question,
        n1: usize,
        subgroup: usize,
        sampling: &SamplingConfig,
    ) -> Result<Vec<ExecutorTrace>> {
        if n1 == 0 {
            return Err(Error::Usage("executor pool needs n1 >= 1".into()));
        }
        let slots: Vec<RunSlot> = (0..n1)
            .map(|run_index| RunSlot {
                subgroup,
                run_index,
                replay_index: (subgroup * n1 + run_index) as u32,
                seed: self.schedule.executor(&question.id, subgroup, run_index),
            })
            .collect();

        let mut results: Vec<(usize, std::result::Result<ExecutorTrace, BackendError>)> =
            stream::iter(slots)
                .map(|slot| async move {
                    let out = self.backend.execute(question, sampling, &slot).await;
                    (slot.run_index, out)
                })
                .buffer_unordered(self.parallelism.max(1))
                .collect()
                .await;
        results.sort_by_key(|(i, _)| *i);

        let mut traces = Vec::with_capacity(n1);
        let mut failures = 0;
        let mut last_error = String::new();
        for (run_index, outcome) in results {
            match outcome {
                Ok(mut trace) => {
                    trace.run_index = run_index;
                    traces.push(trace);
                }
                Err(BackendError::Replay(reason)) => return Err(Error::Replay(reason)),
                Err(err) => {
                    warn!(question = %question.id, run_index, error = %err, "executor run failed");
                    failures += 1;
                    last_error = err.to_string();
                    traces.push(ExecutorTrace::failed(run_index, last_error.clone()));
                }
            }
        }
        if failures == n1 {
            return Err(Error::AllExecutorsFailed {
                question_id: question.id.clone(),
                runs: n1,
                last_error,
            });
        }
        Ok(traces)
    }
}

/// Convenience wrapper for a single subgroup.
pub async fn run_executor_pool(
    question: &Question,
    n1: usize,
    backend: &dyn ExecutorBackend,
    sampling: &SamplingConfig,
    schedule: SeedSchedule,
    parallelism: usize,
) -> Result<Vec<ExecutorTrace>> {
    ExecutorPool {
        backend,
        schedule,
        parallelism,
    }
    .run(question, n1, 0, sampling)
    .await
}
