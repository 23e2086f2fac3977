use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use tracing::{debug, warn};

use crate::cache::{CacheMode, ResponseCache};
use crate::error::{AttemptRecord, GatewayError};
use crate::limiter::{Clock, RateLimiter, TokioClock};
use crate::request::{ModelRequest, ModelResponse};
use crate::retry::RetryPolicy;
use crate::transport::Transport;

fn default_rpm() -> u32 {
    60
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout() -> u64 {
    120
}

/// Per-endpoint connection record. Credentials are never stored here; see
/// [`crate::credential_env_var`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub id: String,
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_rpm")]
    pub rpm: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

struct EndpointState {
    config: EndpointConfig,
    limiter: RateLimiter,
    permits: Semaphore,
}

pub struct Gateway {
    endpoints: HashMap<String, EndpointState>,
    transport: Arc<dyn Transport>,
    cache: Option<Arc<ResponseCache>>,
    mode: CacheMode,
    policy: RetryPolicy,
}

fn build_states(
    endpoints: impl IntoIterator<Item = EndpointConfig>,
    clock: Arc<dyn Clock>,
) -> HashMap<String, EndpointState> {
    endpoints
        .into_iter()
        .map(|config| {
            let state = EndpointState {
                limiter: RateLimiter::per_minute(config.rpm.max(1), clock.clone()),
                permits: Semaphore::new(config.concurrency.max(1)),
                config,
            };
            (state.config.id.clone(), state)
        })
        .collect()
}

impl Gateway {
    pub fn new(endpoints: Vec<EndpointConfig>, transport: Arc<dyn Transport>) -> Self {
        Self {
            endpoints: build_states(endpoints, Arc::new(TokioClock::new())),
            transport,
            cache: None,
            mode: CacheMode::Off,
            policy: RetryPolicy::default(),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>, mode: CacheMode) -> Self {
        self.cache = Some(cache);
        self.mode = mode;
        self
    }

    pub fn with_retry_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        let configs: Vec<_> = self.endpoints.drain().map(|(_, s)| s.config).collect();
        self.endpoints = build_states(configs, clock);
        self
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn endpoint(&self, id: &str) -> Option<&EndpointConfig> {
        self.endpoints.get(id).map(|s| &s.config)
    }

    pub fn network_operations(&self) -> u64 {
        self.transport.network_operations()
    }

    /// Sends with the gateway's default retry policy.
    pub async fn request(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        self.send(request, &self.policy).await
    }

    pub async fn send(
        &self,
        request: &ModelRequest,
        policy: &RetryPolicy,
    ) -> Result<ModelResponse, GatewayError> {
        request.validate().map_err(GatewayError::InvalidRequest)?;

        if matches!(self.mode, CacheMode::Replay | CacheMode::StrictReplay) {
            if let Some(cache) = &self.cache {
                if let Some(hit) = cache.replay(request)? {
                    debug!(endpoint = %request.endpoint_id, "replay hit");
                    return Ok(hit);
                }
            }
            if self.mode == CacheMode::StrictReplay {
                return Err(GatewayError::ReplayMiss {
                    key: crate::CacheKey::for_request(request),
                });
            }
        }

        let state = self
            .endpoints
            .get(&request.endpoint_id)
            .ok_or_else(|| GatewayError::UnknownEndpoint(request.endpoint_id.clone()))?;

        let max_attempts = policy.max_attempts.max(1);
        let mut attempts = Vec::new();
        for attempt in 0..max_attempts {
            let outcome = {
                let _permit = state.permits.acquire().await.expect("semaphore never closed");
                state.limiter.acquire().await;
                self.transport.send_once(&state.config, request).await
            };
            match outcome {
                Ok(response) => {
                    if matches!(self.mode, CacheMode::Record | CacheMode::Replay) {
                        if let Some(cache) = &self.cache {
                            cache.record(request, &response)?;
                        }
                    }
                    return Ok(response);
                }
                Err(err) if !err.is_retryable() => {
                    attempts.push(AttemptRecord {
                        attempt: attempt + 1,
                        error: err.to_string(),
                        delay: None,
                    });
                    return Err(GatewayError::Rejected {
                        endpoint: request.endpoint_id.clone(),
                        reason: err.to_string(),
                        attempts,
                    });
                }
                Err(err) => {
                    let delay = (attempt + 1 < max_attempts)
                        .then(|| policy.delay(attempt, err.retry_after(), &mut rand::rng()));
                    warn!(endpoint = %request.endpoint_id, attempt = attempt + 1, error = %err, ?delay, "transient failure");
                    attempts.push(AttemptRecord {
                        attempt: attempt + 1,
                        error: err.to_string(),
                        delay,
                    });
                    if let Some(delay) = delay {
                        tokio::time::sleep(delay).await;
                    }
                }
            }
        }
        Err(GatewayError::Exhausted {
            endpoint: request.endpoint_id.clone(),
            last: attempts.last().map(|a| a.error.clone()).unwrap_or_default(),
            attempts,
        })
    }
}
