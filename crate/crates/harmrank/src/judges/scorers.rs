//! Per-item harm scorers: the ground-truth oracle plus clients for the
//! two classifier-style baselines (a moderation endpoint scoring several
//! harm categories, and a toxicity endpoint returning one summary score).
//!
//! API replies are cached raw when a cache is attached, keyed by
//! (endpoint kind, model, text), so replays stay offline.

use async_trait::async_trait;
use serde_json::{json, Value};

use crate::domain::ContentItem;
use crate::llm::{scorer_cache_key, DiskCache, HttpClient, LlmError};
use crate::rerank::{HarmScorer, ScorerError};

use super::HarmScore;

/// Default moderation endpoint (OpenAI-compatible).
pub const DEFAULT_MODERATION_URL: &str = "https://api.openai.com/v1/moderations";

/// Default toxicity-analysis endpoint (Perspective-compatible).
pub const DEFAULT_PERSPECTIVE_URL: &str =
    "https://commentanalyzer.googleapis.com/v1alpha1/comments:analyze";

/// Scores from ground truth: harmful is 1.0, harmless is 0.0.
pub struct OracleScorer;

#[async_trait]
impl HarmScorer for OracleScorer {
    async fn score(&self, item: &ContentItem) -> Result<HarmScore, ScorerError> {
        let label = item.require_label().map_err(|_| ScorerError::Unlabeled {
            id: item.id().clone(),
        })?;
        HarmScore::new(if label.is_harmful() { 1.0 } else { 0.0 })
    }

    fn name(&self) -> &str {
        "oracle-score"
    }
}

/// Moderation-API scorer: posts the text and takes the maximum over all
/// returned category scores as the harm proxy.
pub struct ModerationScorer {
    http: HttpClient,
    api_key: String,
    url: String,
    model: Option<String>,
    cache: Option<DiskCache>,
}

impl ModerationScorer {
    pub fn new(http: HttpClient, api_key: impl Into<String>) -> Self {
        ModerationScorer {
            http,
            api_key: api_key.into(),
            url: DEFAULT_MODERATION_URL.to_string(),
            model: None,
            cache: None,
        }
    }

    pub fn with_url(mut self, url: impl Into<String>) -> Self {
        self.url = url.into();
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    pub fn with_cache(mut self, cache: DiskCache) -> Self {
        self.cache = Some(cache);
        self
    }

    fn extract(value: &Value) -> Result<f64, ScorerError> {
        let scores = value
            .pointer("/results/0/category_scores")
            .and_then(Value::as_object)
            .ok_or_else(|| ScorerError::MalformedResponse {
                message: "reply lacks results[0].category_scores".to_string(),
            })?;
        let mut max: Option<f64> = None;
        for (category, score) in scores {
            let score = score
                .as_f64()
                .ok_or_else(|| ScorerError::MalformedResponse {
                    message: format!("category score '{category}' is not a number"),
                })?;
            max = Some(max.map_or(score, |m| m.max(score)));
        }
        max.ok_or_else(|| ScorerError::MalformedResponse {
            message: "category_scores object is empty".to_string(),
        })
    }
}

async fn cached_post(
    http: &HttpClient,
    cache: Option<&DiskCache>,
    cache_key: &crate::llm::CacheKey,
    url: &str,
    headers: &[(String, String)],
    body: &Value,
) -> Result<Value, LlmError> {
    if let Some(cache) = cache {
        if let Some(raw) = cache.get(cache_key)? {
            return serde_json::from_str(&raw).map_err(|e| LlmError::Storage {
                message: format!("corrupt cached scorer reply: {e}"),
            });
        }
    }
    let value = http.post_json(url, headers, body).await?;
    if let Some(cache) = cache {
        cache.put(cache_key, &value.to_string())?;
    }
    Ok(value)
}

#[async_trait]
impl HarmScorer for ModerationScorer {
    async fn score(&self, item: &ContentItem) -> Result<HarmScore, ScorerError> {
        let key = scorer_cache_key("moderation", self.model.as_deref(), item.text());
        let mut body = json!({ "input": item.text() });
        if let Some(model) = &self.model {
            body["model"] = json!(model);
        }
        let headers = vec![(
            "authorization".to_string(),
            format!("Bearer {}", self.api_key),
        )];
        let value = cached_post(
            &self.http,
            self.cache.as_ref(),
            &key,
            &self.url,
            &headers,
            &body,
        )
        .await?;
        HarmScore::new(Self::extract(&value)?)
    }

    fn name(&self) -> &str {
        "moderation"
    }
}

/// Toxicity-API scorer: requests the TOXICITY attribute and returns its
/// summary score.
pub struct PerspectiveScorer {
    http: HttpClient,
    api_key: String,
    url: String,
    cache: Option<DiskCache>,
}

impl PerspectiveScorer {
    pub fn new(http: HttpClient, api_key: impl Into<String>) -> Self {
        PerspectiveScorer {
            http,
            api_key: api_key.into(),
            url: DEFAULT_PERSPECTIVE_URL.to_string(),
            cache: None,
        }
    }

    pub fn with_url(mut self, url: impl Into<String>) -> Self {
        self.url = url.into();
        self
    }

    pub fn with_cache(mut self, cache: DiskCache) -> Self {
        self.cache = Some(cache);
        self
    }

    fn extract(value: &Value) -> Result<f64, ScorerError> {
        value
            .pointer("/attributeScores/TOXICITY/summaryScore/value")
            .and_then(Value::as_f64)
            .ok_or_else(|| ScorerError::MalformedResponse {
                message: "reply lacks attributeScores.TOXICITY.summaryScore.value".to_string(),
            })
    }
}

#[async_trait]
impl HarmScorer for PerspectiveScorer {
    async fn score(&self, item: &ContentItem) -> Result<HarmScore, ScorerError> {
        let key = scorer_cache_key("perspective", None, item.text());
        let url = format!("{}?key={}", self.url, self.api_key);
        let body = json!({
            "comment": { "text": item.text() },
            "requestedAttributes": { "TOXICITY": {} },
        });
        let value = cached_post(&self.http, self.cache.as_ref(), &key, &url, &[], &body).await?;
        HarmScore::new(Self::extract(&value)?)
    }

    fn name(&self) -> &str {
        "perspective"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::HarmLabel;
    use crate::llm::testing::{MockReply, MockTransport};
    use crate::llm::RetryPolicy;
    use std::sync::Arc;
    use std::time::Duration;
    use tempfile::TempDir;

    fn http(transport: Arc<MockTransport>) -> HttpClient {
        let retry = RetryPolicy {
            max_attempts: 2,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(2),
        };
        HttpClient::new(transport, retry, None, 4)
    }

    fn item(text: &str) -> ContentItem {
        ContentItem::labeled("x", text, HarmLabel::Harmless).unwrap()
    }

    #[tokio::test]
    async fn oracle_scorer_maps_labels() {
        let harmless = ContentItem::labeled("a", "t", HarmLabel::Harmless).unwrap();
        let harmful = ContentItem::labeled("b", "t", HarmLabel::Harmful).unwrap();
        assert_eq!(OracleScorer.score(&harmless).await.unwrap().value(), 0.0);
        assert_eq!(OracleScorer.score(&harmful).await.unwrap().value(), 1.0);
    }

    fn moderation_body(scores: Value) -> MockReply {
        MockReply::Json {
            status: 200,
            body: json!({ "results": [{ "flagged": true, "category_scores": scores }] })
                .to_string(),
        }
    }

    #[tokio::test]
    async fn moderation_takes_max_category_score() {
        let transport = Arc::new(MockTransport::scripted(
            vec![moderation_body(json!({
                "hate": 0.1,
                "sexual": 0.7,
                "violence": 0.3,
            }))],
            MockReply::status(500, "unused"),
        ));
        let scorer = ModerationScorer::new(http(transport), "key");
        assert_eq!(scorer.score(&item("text")).await.unwrap().value(), 0.7);
    }

    #[tokio::test]
    async fn moderation_all_zero_categories() {
        let transport = Arc::new(MockTransport::scripted(
            vec![moderation_body(json!({ "hate": 0.0, "sexual": 0.0 }))],
            MockReply::status(500, "unused"),
        ));
        let scorer = ModerationScorer::new(http(transport), "key");
        assert_eq!(scorer.score(&item("text")).await.unwrap().value(), 0.0);
    }

    #[tokio::test]
    async fn moderation_missing_scores_is_error() {
        let transport = Arc::new(MockTransport::scripted(
            vec![MockReply::Json {
                status: 200,
                body: json!({ "results": [{ "flagged": false }] }).to_string(),
            }],
            MockReply::status(500, "unused"),
        ));
        let scorer = ModerationScorer::new(http(transport), "key");
        assert!(matches!(
            scorer.score(&item("text")).await.unwrap_err(),
            ScorerError::MalformedResponse { .. }
        ));
    }

    fn perspective_body(value: f64) -> MockReply {
        MockReply::Json {
            status: 200,
            body: json!({
                "attributeScores": {
                    "TOXICITY": { "summaryScore": { "value": value } }
                }
            })
            .to_string(),
        }
    }

    #[tokio::test]
    async fn perspective_passes_summary_through() {
        let transport = Arc::new(MockTransport::scripted(
            vec![perspective_body(0.42)],
            MockReply::status(500, "unused"),
        ));
        let scorer = PerspectiveScorer::new(http(transport), "key");
        assert_eq!(scorer.score(&item("text")).await.unwrap().value(), 0.42);
    }

    #[tokio::test]
    async fn perspective_zero_score() {
        let transport = Arc::new(MockTransport::scripted(
            vec![perspective_body(0.0)],
            MockReply::status(500, "unused"),
        ));
        let scorer = PerspectiveScorer::new(http(transport), "key");
        assert_eq!(scorer.score(&item("text")).await.unwrap().value(), 0.0);
    }

    #[tokio::test]
    async fn perspective_missing_attribute_is_error() {
        let transport = Arc::new(MockTransport::scripted(
            vec![MockReply::Json {
                status: 200,
                body: json!({ "attributeScores": {} }).to_string(),
            }],
            MockReply::status(500, "unused"),
        ));
        let scorer = PerspectiveScorer::new(http(transport), "key");
        assert!(matches!(
            scorer.score(&item("text")).await.unwrap_err(),
            ScorerError::MalformedResponse { .. }
        ));
    }

    #[tokio::test]
    async fn scorer_cache_avoids_second_call() {
        let dir = TempDir::new().unwrap();
        let cache = DiskCache::open(dir.path()).unwrap();
        let transport = Arc::new(MockTransport::scripted(
            vec![moderation_body(json!({ "hate": 0.4 }))],
            MockReply::status(500, "should not be reached"),
        ));
        let scorer = ModerationScorer::new(http(transport.clone()), "key").with_cache(cache);
        assert_eq!(scorer.score(&item("text")).await.unwrap().value(), 0.4);
        assert_eq!(scorer.score(&item("text")).await.unwrap().value(), 0.4);
        assert_eq!(transport.calls(), 1);
    }
}
