//! Backend-agnostic chat-completion client with disk caching, retry and
//! backoff, rate limiting, and bounded concurrency.
//!
//! The wire protocol is the common messages-in/text-out chat-completions
//! JSON shape, so any compatible backend works by pointing `base_url` at
//! it. Replies are cached on disk keyed by a digest of the canonical
//! request, which makes re-running a finished experiment free.

pub mod cache;
pub mod limit;
pub mod testing;
pub mod transport;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::prompts::MessageList;

pub use cache::{CacheKey, DiskCache};
pub use transport::{HttpClient, ReqwestTransport, RetryPolicy, Transport};

/// Environment variable holding the chat backend API key.
pub const LLM_API_KEY_VAR: &str = "LLM_API_KEY";
/// Environment variable holding the moderation endpoint API key.
pub const MODERATION_API_KEY_VAR: &str = "MODERATION_API_KEY";
/// Environment variable holding the toxicity endpoint API key.
pub const PERSPECTIVE_API_KEY_VAR: &str = "PERSPECTIVE_API_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport failure: {message}")]
    Transport { message: String },
    #[error("retry attempts exhausted after {attempts} attempts")]
    RetriesExhausted {
        attempts: u32,
        #[source]
        last: Box<LlmError>,
    },
    #[error("malformed response: {message}")]
    MalformedResponse { message: String },
    #[error("cache storage failure: {message}")]
    Storage { message: String },
}

/// Chat backend configuration.
#[derive(Debug, Clone)]
pub struct ChatConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    /// Decoding temperature; greedy by default since the expected reply
    /// is a single short token pattern.
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        ChatConfig {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            temperature: 0.0,
            max_tokens: 16,
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    /// Sets the decoding temperature. Panics on negative or non-finite
    /// values.
    pub fn with_temperature(mut self, temperature: f64) -> Self {
        assert!(
            temperature.is_finite() && temperature >= 0.0,
            "temperature must be finite and non-negative"
        );
        self.temperature = temperature;
        self
    }

    /// Sets the reply token budget. Panics on zero.
    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        assert!(max_tokens > 0, "max_tokens must be positive");
        self.max_tokens = max_tokens;
        self
    }
}

/// One chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: MessageList,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// Digest of the canonical serialization of (endpoint kind, model,
/// messages, temperature, max_tokens). Equal requests hash equal; any
/// field change, message edit, or message reorder changes the key.
pub fn canonical_key(request: &ChatRequest) -> CacheKey {
    #[derive(Serialize)]
    struct CanonicalMessage<'a> {
        role: &'a str,
        content: &'a str,
    }
    #[derive(Serialize)]
    struct Canonical<'a> {
        endpoint: &'a str,
        model: &'a str,
        temperature: f64,
        max_tokens: u32,
        messages: Vec<CanonicalMessage<'a>>,
    }
    let canonical = Canonical {
        endpoint: "chat",
        model: &request.model,
        temperature: request.temperature,
        max_tokens: request.max_tokens,
        messages: request
            .messages
            .messages()
            .iter()
            .map(|m| CanonicalMessage {
                role: m.role.as_str(),
                content: &m.content,
            })
            .collect(),
    };
    let bytes = serde_json::to_vec(&canonical).expect("canonical serialization cannot fail");
    CacheKey::from_canonical_bytes(&bytes)
}

/// Cache key for a single-text scoring endpoint (moderation, toxicity).
pub fn scorer_cache_key(endpoint: &str, model: Option<&str>, text: &str) -> CacheKey {
    #[derive(Serialize)]
    struct Canonical<'a> {
        endpoint: &'a str,
        model: Option<&'a str>,
        text: &'a str,
    }
    let bytes = serde_json::to_vec(&Canonical {
        endpoint,
        model,
        text,
    })
    .expect("canonical serialization cannot fail");
    CacheKey::from_canonical_bytes(&bytes)
}

/// Cache and network counters snapshot for reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientStats {
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub network_calls: u64,
    pub retries: u64,
}

#[derive(Debug, Default)]
struct CacheCounters {
    hits: AtomicU64,
    misses: AtomicU64,
}

/// Chat-completions client over any [`Transport`].
#[derive(Clone)]
pub struct ChatClient {
    config: ChatConfig,
    http: HttpClient,
    cache: Option<DiskCache>,
    cache_counters: Arc<CacheCounters>,
}

impl ChatClient {
    pub fn new(config: ChatConfig, http: HttpClient, cache: Option<DiskCache>) -> Self {
        ChatClient {
            config,
            http,
            cache,
            cache_counters: Arc::new(CacheCounters::default()),
        }
    }

    pub fn config(&self) -> &ChatConfig {
        &self.config
    }

    pub fn http(&self) -> &HttpClient {
        &self.http
    }

    pub fn cache(&self) -> Option<&DiskCache> {
        self.cache.as_ref()
    }

    /// Builds a request with this client's model and decoding defaults.
    pub fn request(&self, messages: MessageList) -> ChatRequest {
        ChatRequest {
            model: self.config.model.clone(),
            messages,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        }
    }

    /// Completes a request, serving byte-identical requests from the
    /// cache with zero network activity.
    pub async fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.complete_inner(request, true).await
    }

    /// Completes a request, skipping the cache read (the reply still
    /// overwrites the cache entry). Used to retry nonconforming replies
    /// that would otherwise be replayed verbatim.
    pub async fn complete_fresh(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.complete_inner(request, false).await
    }

    async fn complete_inner(
        &self,
        request: &ChatRequest,
        read_cache: bool,
    ) -> Result<String, LlmError> {
        let key = canonical_key(request);
        if read_cache {
            if let Some(cache) = &self.cache {
                if let Some(reply) = cache.get(&key)? {
                    self.cache_counters.hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(reply);
                }
            }
        }
        self.cache_counters.misses.fetch_add(1, Ordering::Relaxed);

        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let mut headers = Vec::new();
        if let Some(api_key) = &self.config.api_key {
            headers.push(("authorization".to_string(), format!("Bearer {api_key}")));
        }
        let body = json!({
            "model": request.model,
            "messages": request
                .messages
                .messages()
                .iter()
                .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
                .collect::<Vec<_>>(),
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });

        let value = self.http.post_json(&url, &headers, &body).await?;
        let reply = value
            .pointer("/choices/0/message/content")
            .and_then(serde_json::Value::as_str)
            .ok_or_else(|| LlmError::MalformedResponse {
                message: "reply lacks choices[0].message.content".to_string(),
            })?
            .to_string();

        if let Some(cache) = &self.cache {
            cache.put(&key, &reply)?;
        }
        Ok(reply)
    }

    pub fn stats(&self) -> ClientStats {
        let counters = self.http.counters();
        ClientStats {
            cache_hits: self.cache_counters.hits.load(Ordering::Relaxed),
            cache_misses: self.cache_counters.misses.load(Ordering::Relaxed),
            network_calls: counters.network_calls.load(Ordering::Relaxed),
            retries: counters.retries.load(Ordering::Relaxed),
        }
    }

    /// Persists the cache index.
    pub fn flush_cache(&self) -> Result<(), LlmError> {
        match &self.cache {
            Some(cache) => cache.flush(),
            None => Ok(()),
        }
    }
}
