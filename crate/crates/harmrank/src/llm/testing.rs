//! Scripted mock transport for offline tests: counts calls, tracks the
//! concurrent-request high-water mark, and replies from a script, a
//! fallback, or a request-inspecting function.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde_json::{json, Value};

use super::transport::{Transport, TransportFailure, TransportReply};

/// One scripted transport outcome.
#[derive(Debug, Clone)]
pub enum MockReply {
    Json { status: u16, body: String },
    Fail { message: String, retryable: bool },
}

impl MockReply {
    /// A 200 chat-completions reply whose assistant content is `text`.
    pub fn chat_text(text: &str) -> Self {
        MockReply::Json {
            status: 200,
            body: json!({
                "choices": [{"message": {"role": "assistant", "content": text}}]
            })
            .to_string(),
        }
    }

    /// A bare status reply with a plain-text body.
    pub fn status(status: u16, body: &str) -> Self {
        MockReply::Json {
            status,
            body: body.to_string(),
        }
    }
}

type ReplyFn = dyn Fn(&str, &Value) -> MockReply + Send + Sync;

enum Mode {
    Scripted {
        script: Mutex<VecDeque<MockReply>>,
        fallback: MockReply,
    },
    Function(Box<ReplyFn>),
}

/// Counting transport double.
pub struct MockTransport {
    mode: Mode,
    calls: AtomicU64,
    in_flight: AtomicU64,
    high_water: AtomicU64,
    delay: Option<Duration>,
}

impl MockTransport {
    /// Always replies with a chat completion containing `text`.
    pub fn chat(text: &str) -> Self {
        Self::scripted(Vec::new(), MockReply::chat_text(text))
    }

    /// Replies from `script` in order, then from `fallback` forever.
    pub fn scripted(script: Vec<MockReply>, fallback: MockReply) -> Self {
        MockTransport {
            mode: Mode::Scripted {
                script: Mutex::new(script.into()),
                fallback,
            },
            calls: AtomicU64::new(0),
            in_flight: AtomicU64::new(0),
            high_water: AtomicU64::new(0),
            delay: None,
        }
    }

    /// Replies computed from the request URL and body.
    pub fn respond_with(f: impl Fn(&str, &Value) -> MockReply + Send + Sync + 'static) -> Self {
        MockTransport {
            mode: Mode::Function(Box::new(f)),
            calls: AtomicU64::new(0),
            in_flight: AtomicU64::new(0),
            high_water: AtomicU64::new(0),
            delay: None,
        }
    }

    /// Adds artificial latency so bounded-concurrency tests can observe
    /// overlapping requests.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    /// Total transport invocations (the "network call" count).
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Maximum number of requests ever in flight at once.
    pub fn high_water(&self) -> u64 {
        self.high_water.load(Ordering::SeqCst)
    }

    fn next_reply(&self, url: &str, body: &Value) -> MockReply {
        match &self.mode {
            Mode::Scripted { script, fallback } => script
                .lock()
                .expect("mock script poisoned")
                .pop_front()
                .unwrap_or_else(|| fallback.clone()),
            Mode::Function(f) => f(url, body),
        }
    }
}

#[async_trait]
impl Transport for MockTransport {
    async fn post_json(
        &self,
        url: &str,
        _headers: &[(String, String)],
        body: &Value,
    ) -> Result<TransportReply, TransportFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.high_water.fetch_max(now, Ordering::SeqCst);

        if let Some(delay) = self.delay {
            tokio::time::sleep(delay).await;
        }
        let reply = self.next_reply(url, body);

        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        match reply {
            MockReply::Json { status, body } => Ok(TransportReply { status, body }),
            MockReply::Fail { message, retryable } => Err(TransportFailure { message, retryable }),
        }
    }
}
