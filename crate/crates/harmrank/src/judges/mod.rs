//! Judge and scorer implementations: a ground-truth oracle, a seeded
//! noisy judge for synthetic degradation studies, an LLM-backed judge,
//! and per-item scorers (oracle plus moderation/toxicity API clients).

mod parse;
mod scorers;

pub use parse::{parse_response, ParseError};
pub use scorers::{ModerationScorer, OracleScorer, PerspectiveScorer};

use std::borrow::Cow;
use std::sync::Arc;

use async_trait::async_trait;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::domain::{ContentItem, HarmLabel, ItemId, Verdict};
use crate::llm::ChatClient;
use crate::prompts::PromptStrategy;
use crate::rerank::{JudgeError, Judgment, PairwiseJudge, ScorerError};

/// Default number of fresh completions attempted after a nonconforming
/// reply before scoring the pair as `Neither`.
pub const DEFAULT_PARSE_RETRIES: u32 = 2;

/// Default per-text character budget applied before prompt assembly.
pub const DEFAULT_TEXT_BUDGET: usize = 2000;

/// A harm score bounded to `[0, 1]`. Out-of-range or non-finite values
/// are rejected rather than clamped.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct HarmScore(f64);

impl HarmScore {
    pub fn new(value: f64) -> Result<Self, ScorerError> {
        if value.is_finite() && (0.0..=1.0).contains(&value) {
            Ok(HarmScore(value))
        } else {
            Err(ScorerError::OutOfRange { value })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Ground-truth verdict for a presented (a, b) pair.
///
/// Exactly one harmful side is named. When both are harmful the
/// first-presented item is named, so across the two presentation orders
/// each harmful item collects one point and their relative order is
/// preserved by the stable sort. Both harmless yields `Neither`.
pub fn oracle_verdict(a: HarmLabel, b: HarmLabel) -> Verdict {
    match (a, b) {
        (HarmLabel::Harmful, HarmLabel::Harmless) => Verdict::First,
        (HarmLabel::Harmless, HarmLabel::Harmful) => Verdict::Second,
        (HarmLabel::Harmless, HarmLabel::Harmless) => Verdict::Neither,
        (HarmLabel::Harmful, HarmLabel::Harmful) => Verdict::First,
    }
}

/// Degraded oracle: returns the true verdict with probability `accuracy`,
/// otherwise one of the two other verdicts uniformly at random.
pub fn noisy_verdict(a: HarmLabel, b: HarmLabel, accuracy: f64, rng: &mut impl Rng) -> Verdict {
    assert!(
        (0.0..=1.0).contains(&accuracy),
        "accuracy must lie in [0, 1]"
    );
    let truth = oracle_verdict(a, b);
    if rng.random_bool(accuracy) {
        return truth;
    }
    let others: [Verdict; 2] = match truth {
        Verdict::First => [Verdict::Second, Verdict::Neither],
        Verdict::Second => [Verdict::First, Verdict::Neither],
        Verdict::Neither => [Verdict::First, Verdict::Second],
    };
    others[rng.random_range(0..2)]
}

/// Ground-truth reference judge.
pub struct OracleJudge;

#[async_trait]
impl PairwiseJudge for OracleJudge {
    async fn judge(&self, a: &ContentItem, b: &ContentItem) -> Result<Judgment, JudgeError> {
        let a_label = a
            .require_label()
            .map_err(|_| JudgeError::Unlabeled { id: a.id().clone() })?;
        let b_label = b
            .require_label()
            .map_err(|_| JudgeError::Unlabeled { id: b.id().clone() })?;
        Ok(Judgment::of(oracle_verdict(a_label, b_label)))
    }

    fn name(&self) -> &str {
        "oracle"
    }
}

/// Seeded noisy judge. Randomness is derived per presented pair from
/// (seed, first id, second id), so outcomes are independent of scheduling
/// and identical across runs and concurrency levels.
pub struct NoisyJudge {
    accuracy: f64,
    seed: u64,
    name: String,
}

impl NoisyJudge {
    pub fn new(accuracy: f64, seed: u64) -> Result<Self, JudgeError> {
        if !accuracy.is_finite() || !(0.0..=1.0).contains(&accuracy) {
            return Err(JudgeError::InvalidConfig {
                message: format!("noisy judge accuracy {accuracy} is outside [0, 1]"),
            });
        }
        Ok(NoisyJudge {
            accuracy,
            seed,
            name: format!("noisy-{accuracy:.2}"),
        })
    }

    fn pair_rng(&self, first: &ItemId, second: &ItemId) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(b"harmrank.noisy");
        hasher.update(self.seed.to_le_bytes());
        hasher.update(first.as_str().as_bytes());
        hasher.update([0x1f]);
        hasher.update(second.as_str().as_bytes());
        let bytes: [u8; 32] = hasher.finalize().into();
        ChaCha8Rng::from_seed(bytes)
    }
}

#[async_trait]
impl PairwiseJudge for NoisyJudge {
    async fn judge(&self, a: &ContentItem, b: &ContentItem) -> Result<Judgment, JudgeError> {
        let a_label = a
            .require_label()
            .map_err(|_| JudgeError::Unlabeled { id: a.id().clone() })?;
        let b_label = b
            .require_label()
            .map_err(|_| JudgeError::Unlabeled { id: b.id().clone() })?;
        let mut rng = self.pair_rng(a.id(), b.id());
        Ok(Judgment::of(noisy_verdict(
            a_label,
            b_label,
            self.accuracy,
            &mut rng,
        )))
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Truncates to a character budget on a char boundary.
fn truncate_text(text: &str, budget: Option<usize>) -> (Cow<'_, str>, bool) {
    match budget {
        Some(limit) => match text.char_indices().nth(limit) {
            Some((byte_idx, _)) => (Cow::Borrowed(&text[..byte_idx]), true),
            None => (Cow::Borrowed(text), false),
        },
        None => (Cow::Borrowed(text), false),
    }
}

/// LLM-backed pairwise judge: builds the strategy's messages, queries the
/// chat backend, and parses the `Response=X` reply.
///
/// Nonconforming replies are retried with identical messages (bypassing
/// the cache read so a cached bad reply is not replayed); once retries
/// are exhausted the pair scores as `Neither` and the judgment is
/// flagged.
pub struct LlmJudge {
    client: Arc<ChatClient>,
    strategy: PromptStrategy,
    retries_on_parse_failure: u32,
    text_budget: Option<usize>,
    keep_transcripts: bool,
    name: String,
}

impl LlmJudge {
    pub fn new(client: Arc<ChatClient>, strategy: PromptStrategy) -> Self {
        let name = format!("llm-{}", strategy.slug());
        LlmJudge {
            client,
            strategy,
            retries_on_parse_failure: DEFAULT_PARSE_RETRIES,
            text_budget: Some(DEFAULT_TEXT_BUDGET),
            keep_transcripts: false,
            name,
        }
    }

    pub fn with_parse_retries(mut self, retries: u32) -> Self {
        self.retries_on_parse_failure = retries;
        self
    }

    /// `None` disables truncation.
    pub fn with_text_budget(mut self, budget: Option<usize>) -> Self {
        self.text_budget = budget;
        self
    }

    pub fn with_transcripts(mut self, keep: bool) -> Self {
        self.keep_transcripts = keep;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

#[async_trait]
impl PairwiseJudge for LlmJudge {
    async fn judge(&self, a: &ContentItem, b: &ContentItem) -> Result<Judgment, JudgeError> {
        let (a_text, a_truncated) = truncate_text(a.text(), self.text_budget);
        let (b_text, b_truncated) = truncate_text(b.text(), self.text_budget);
        let truncated_inputs = u8::from(a_truncated) + u8::from(b_truncated);

        let messages = self.strategy.build(&a_text, &b_text)?;
        let request = self.client.request(messages);

        let mut retries = 0u32;
        let mut reply = self.client.complete(&request).await?;
        loop {
            match parse_response(&reply) {
                Ok(verdict) => {
                    return Ok(Judgment {
                        verdict,
                        parse_retries: retries,
                        parse_failed: false,
                        truncated_inputs,
                        transcript: self.keep_transcripts.then(|| reply.clone()),
                    });
                }
                Err(_) if retries < self.retries_on_parse_failure => {
                    retries += 1;
                    reply = self.client.complete_fresh(&request).await?;
                }
                Err(_) => {
                    return Ok(Judgment {
                        verdict: Verdict::Neither,
                        parse_retries: retries,
                        parse_failed: true,
                        truncated_inputs,
                        transcript: self.keep_transcripts.then(|| reply.clone()),
                    });
                }
            }
        }
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Declarative judge selection, validated at build time.
pub struct JudgeConfig {
    pub kind: JudgeKind,
    pub retries_on_parse_failure: u32,
}

pub enum JudgeKind {
    Oracle,
    Noisy {
        accuracy: f64,
        seed: u64,
    },
    Llm {
        strategy: PromptStrategy,
        client: Arc<ChatClient>,
    },
}

impl JudgeConfig {
    pub fn new(kind: JudgeKind) -> Self {
        JudgeConfig {
            kind,
            retries_on_parse_failure: DEFAULT_PARSE_RETRIES,
        }
    }

    pub fn build(self) -> Result<Box<dyn PairwiseJudge>, JudgeError> {
        match self.kind {
            JudgeKind::Oracle => Ok(Box::new(OracleJudge)),
            JudgeKind::Noisy { accuracy, seed } => Ok(Box::new(NoisyJudge::new(accuracy, seed)?)),
            JudgeKind::Llm { strategy, client } => Ok(Box::new(
                LlmJudge::new(client, strategy).with_parse_retries(self.retries_on_parse_failure),
            )),
        }
    }
}
