//! HTTP transport abstraction with retry, backoff, rate limiting, and a
//! bounded in-flight window.
//!
//! `Transport` is the seam for tests: the real [`ReqwestTransport`] talks
//! HTTP, while mocks script replies and count calls. Everything above the
//! seam (retry classification, backoff, limits) is shared.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use rand::Rng;
use serde_json::Value;
use tokio::sync::Semaphore;

use super::limit::RateLimiter;
use super::LlmError;

/// Raw reply from a transport attempt.
#[derive(Debug, Clone)]
pub struct TransportReply {
    pub status: u16,
    pub body: String,
}

/// Transport-level failure (no HTTP status available).
#[derive(Debug, Clone)]
pub struct TransportFailure {
    pub message: String,
    /// Timeouts and connection resets are worth retrying; malformed URLs
    /// are not.
    pub retryable: bool,
}

#[async_trait]
pub trait Transport: Send + Sync {
    async fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
    ) -> Result<TransportReply, TransportFailure>;
}

/// Retry schedule: exponential backoff with jitter, capped attempts.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Total attempts including the first (so 1 disables retries).
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(10),
        }
    }
}

impl RetryPolicy {
    fn delay_for(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(2u32.saturating_pow(attempt.saturating_sub(1)));
        let capped = exp.min(self.max_delay);
        // Jitter in [0.5, 1.5) spreads concurrent retries apart.
        let factor = 0.5 + rand::rng().random::<f64>();
        capped.mul_f64(factor)
    }
}

/// Counters shared by every request path of one client.
#[derive(Debug, Default)]
pub struct RequestCounters {
    pub network_calls: AtomicU64,
    pub retries: AtomicU64,
}

/// JSON-over-HTTP client: retries transient failures (429, 5xx,
/// timeouts), honors a requests-per-minute budget, and never exceeds its
/// in-flight bound. Non-retryable statuses fail immediately.
#[derive(Clone)]
pub struct HttpClient {
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    limiter: Option<Arc<RateLimiter>>,
    in_flight: Arc<Semaphore>,
    counters: Arc<RequestCounters>,
}

impl HttpClient {
    pub fn new(
        transport: Arc<dyn Transport>,
        retry: RetryPolicy,
        requests_per_minute: Option<u32>,
        max_in_flight: usize,
    ) -> Self {
        HttpClient {
            transport,
            retry,
            limiter: requests_per_minute.map(|rpm| Arc::new(RateLimiter::per_minute(rpm))),
            in_flight: Arc::new(Semaphore::new(max_in_flight.max(1))),
            counters: Arc::new(RequestCounters::default()),
        }
    }

    pub fn counters(&self) -> &RequestCounters {
        &self.counters
    }

    fn classify(status: u16) -> bool {
        status == 429 || (500..600).contains(&status)
    }

    /// Posts `body` and parses the reply as JSON.
    pub async fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
    ) -> Result<Value, LlmError> {
        let _permit = self
            .in_flight
            .acquire()
            .await
            .expect("in-flight semaphore closed");

        let mut attempt = 0u32;
        loop {
            attempt += 1;
            if let Some(limiter) = &self.limiter {
                limiter.acquire().await;
            }
            self.counters.network_calls.fetch_add(1, Ordering::Relaxed);

            let failure: LlmError = match self.transport.post_json(url, headers, body).await {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    return serde_json::from_str(&reply.body).map_err(|e| {
                        LlmError::MalformedResponse {
                            message: format!("invalid JSON body: {e}"),
                        }
                    });
                }
                Ok(reply) if Self::classify(reply.status) => LlmError::Status {
                    status: reply.status,
                    body: reply.body,
                },
                Ok(reply) => {
                    // Terminal client error; retrying cannot help.
                    return Err(LlmError::Status {
                        status: reply.status,
                        body: reply.body,
                    });
                }
                Err(f) if f.retryable => LlmError::Transport { message: f.message },
                Err(f) => return Err(LlmError::Transport { message: f.message }),
            };

            if attempt >= self.retry.max_attempts {
                return Err(LlmError::RetriesExhausted {
                    attempts: attempt,
                    last: Box::new(failure),
                });
            }
            self.counters.retries.fetch_add(1, Ordering::Relaxed);
            tokio::time::sleep(self.retry.delay_for(attempt)).await;
        }
    }
}

/// Production transport backed by `reqwest`.
pub struct ReqwestTransport {
    client: reqwest::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, LlmError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Transport {
                message: format!("failed to build HTTP client: {e}"),
            })?;
        Ok(ReqwestTransport { client })
    }
}

#[async_trait]
impl Transport for ReqwestTransport {
    async fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
    ) -> Result<TransportReply, TransportFailure> {
        let mut request = self.client.post(url).json(body);
        for (name, value) in headers {
            request = request.header(name, value);
        }
        match request.send().await {
            Ok(response) => {
                let status = response.status().as_u16();
                let body = response.text().await.map_err(|e| TransportFailure {
                    message: format!("failed reading response body: {e}"),
                    retryable: true,
                })?;
                Ok(TransportReply { status, body })
            }
            Err(e) => Err(TransportFailure {
                retryable: e.is_timeout() || e.is_connect() || e.is_request(),
                message: format!("request failed: {e}"),
            }),
        }
    }
}
