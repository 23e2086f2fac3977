//! Network layer for live model backends.
//!
//! Every request to a remote chat endpoint goes through [`Gateway::send`],
//! which applies, in order:
//!
//! 1. the record/replay cache (a hit never touches the network),
//! 2. the per-endpoint requests-per-minute window and concurrency cap,
//! 3. retries with exponential backoff and full jitter on transient failures.
//!
//! Recorded responses are stored append-only under one directory per
//! endpoint, so a run recorded once can be replayed offline bit-for-bit.

mod cache;
mod client;
mod error;
mod limiter;
mod request;
mod retry;
mod transport;

pub use cache::{CacheEntry, CacheMode, ResponseCache, VerifyReport};
pub use client::{EndpointConfig, Gateway};
pub use error::{AttemptRecord, GatewayError};
pub use limiter::{Clock, ManualClock, RateLimiter, TokioClock};
pub use request::{CacheKey, FinishReason, Message, ModelRequest, ModelResponse, Role};
pub use retry::RetryPolicy;
pub use transport::{credential_env_var, HttpTransport, Transport, TransportError};
