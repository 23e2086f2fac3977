use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }
}

/// One chat-completion request.
///
/// `replay_index` distinguishes repeated samples of the same prompt so that a
/// cache keeps one entry per sample instead of collapsing them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub endpoint_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default)]
    pub capability_flags: BTreeSet<String>,
    #[serde(default)]
    pub replay_index: u32,
}

impl ModelRequest {
    pub fn new(endpoint_id: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            endpoint_id: endpoint_id.into(),
            messages,
            temperature: 0.8,
            max_output_tokens: 2048,
            capability_flags: BTreeSet::new(),
            replay_index: 0,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_output_tokens(mut self, max_output_tokens: u32) -> Self {
        self.max_output_tokens = max_output_tokens;
        self
    }

    pub fn with_capability(mut self, flag: impl Into<String>) -> Self {
        self.capability_flags.insert(flag.into());
        self
    }

    pub fn with_replay_index(mut self, replay_index: u32) -> Self {
        self.replay_index = replay_index;
        self
    }

    /// Checks the structural invariants: at least one message, and the
    /// conversation opens with a system or user turn.
    pub fn validate(&self) -> Result<(), String> {
        match self.messages.first() {
            None => Err("request has no messages".to_string()),
            Some(m) if !matches!(m.role, Role::System | Role::User) => Err(format!(
                "first message must be system or user, got {:?}",
                m.role
            )),
            Some(_) => Ok(()),
        }
    }

    /// Stable byte serialization used for cache keys.
    ///
    /// Field order is fixed by the struct declaration, capability flags are a
    /// sorted set, and floats go through serde_json's shortest round-trip
    /// formatting, so the bytes do not depend on platform or run.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("request serialization is infallible")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    pub usage_tokens: u64,
    pub latency_ms: u64,
}

/// SHA-256 of a request's canonical serialization, hex encoded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn for_request(request: &ModelRequest) -> Self {
        let digest = Sha256::digest(request.canonical_bytes());
        CacheKey(hex::encode(digest))
    }

    pub fn from_hex(hex: impl Into<String>) -> Self {
        CacheKey(hex.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
