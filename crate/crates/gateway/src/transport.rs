use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::client::EndpointConfig;
use crate::request::{FinishReason, ModelRequest, ModelResponse, Role};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("throttled by endpoint")]
    Throttled { retry_after: Option<Duration> },
    #[error("request timed out")]
    Timeout,
    #[error("server error (status {0})")]
    Server(u16),
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("missing credential: set {0}")]
    MissingCredential(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            TransportError::Throttled { .. }
                | TransportError::Timeout
                | TransportError::Server(_)
                | TransportError::Connect(_)
        )
    }

    pub fn retry_after(&self) -> Option<Duration> {
        match self {
            TransportError::Throttled { retry_after } => *retry_after,
            _ => None,
        }
    }
}

/// A single attempt against a remote endpoint. Retries, caching and rate
/// limiting live above this trait.
#[async_trait]
pub trait Transport: Send + Sync {
    async fn send_once(
        &self,
        endpoint: &EndpointConfig,
        request: &ModelRequest,
    ) -> Result<ModelResponse, TransportError>;

    /// Number of network operations issued so far.
    fn network_operations(&self) -> u64;
}

/// Environment variable holding the credential for an endpoint:
/// `ENSEMBLEX_API_KEY_<ID>` with the id upper-cased and non-alphanumerics
/// replaced by `_`.
pub fn credential_env_var(endpoint_id: &str) -> String {
    let suffix: String = endpoint_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("ENSEMBLEX_API_KEY_{suffix}")
}

/// OpenAI-compatible `POST {base}/chat/completions` transport.
pub struct HttpTransport {
    client: reqwest::Client,
    operations: AtomicU64,
}

impl HttpTransport {
    pub fn new() -> Self {
        Self {
            client: reqwest::Client::new(),
            operations: AtomicU64::new(0),
        }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Deserialize)]
struct ChatCompletion {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    total_tokens: u64,
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    }
}

#[async_trait]
impl Transport for HttpTransport {
    async fn send_once(
        &self,
        endpoint: &EndpointConfig,
        request: &ModelRequest,
    ) -> Result<ModelResponse, TransportError> {
        let var = credential_env_var(&endpoint.id);
        let key = std::env::var(&var).map_err(|_| TransportError::MissingCredential(var))?;

        let messages: Vec<_> = request
            .messages
            .iter()
            .map(|m| json!({ "role": role_name(m.role), "content": m.content }))
            .collect();
        let mut body = json!({
            "model": endpoint.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        if !request.capability_flags.is_empty() {
            body["capabilities"] = json!(request.capability_flags);
        }
        let url = format!(
            "{}/chat/completions",
            endpoint.base_url.trim_end_matches('/')
        );

        self.operations.fetch_add(1, Ordering::SeqCst);
        let started = Instant::now();
        let resp = self
            .client
            .post(&url)
            .bearer_auth(key)
            .timeout(Duration::from_secs(endpoint.timeout_secs))
            .json(&body)
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Connect(e.to_string())
                }
            })?;

        let status = resp.status().as_u16();
        if status == 429 {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(TransportError::Throttled { retry_after });
        }
        if status == 408 || status >= 500 {
            return Err(TransportError::Server(status));
        }
        if !(200..300).contains(&status) {
            let text = resp.text().await.unwrap_or_default();
            return Err(TransportError::Protocol(format!("status {status}: {text}")));
        }

        let parsed: ChatCompletion = resp.json().await.map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Protocol(format!("malformed completion body: {e}"))
            }
        })?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| TransportError::Protocol("completion has no choices".into()))?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("stop") | None => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::Error,
        };
        Ok(ModelResponse {
            content: choice.message.content.unwrap_or_default(),
            finish_reason,
            usage_tokens: parsed.usage.map(|u| u.total_tokens).unwrap_or(0),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn network_operations(&self) -> u64 {
        self.operations.load(Ordering::SeqCst)
    }
}
