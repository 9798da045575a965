//! Pairwise preference re-ranking and score-based baseline ranking.
//!
//! The pairwise engine queries a judge for every unordered pair of items
//! in both presentation orders (2·C(n,2) = n·(n−1) judgments), adds one
//! point to whichever item a verdict names, and stable-sorts ascending by
//! accumulated score so the least-harmful content surfaces first. Judging
//! both orders mitigates position bias in LLM judges; `Neither` verdicts
//! leave scores untouched so harmless content is never penalized for
//! merely being compared.
//!
//! Score accumulation is commutative, so issuing judgments concurrently
//! (up to `max_in_flight`) cannot change the result for a deterministic
//! judge.

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use std::num::NonZeroUsize;
use thiserror::Error;

use crate::domain::{
    ContentItem, ContentSequence, DomainError, ItemId, RankedSequence, ScoreTable, Verdict,
};
use crate::judges::HarmScore;
use crate::llm::LlmError;
use crate::prompts::PromptError;

/// One presentation-ordered judge query: `first` is shown as Text A and
/// `second` as Text B. The two orderings of an unordered pair are two
/// distinct queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairQuery {
    pub first: ItemId,
    pub second: ItemId,
}

impl PairQuery {
    pub fn new(first: ItemId, second: ItemId) -> Option<Self> {
        if first == second {
            None
        } else {
            Some(PairQuery { first, second })
        }
    }
}

/// What to do when the judge fails outright (after its own retries).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JudgeFailurePolicy {
    /// Record the failure and score the pair as `Neither`.
    Neither,
    /// Abort the whole rerank, returning partial telemetry.
    Abort,
}

/// Engine policy. Tie-breaking is fixed: the sort is stable, so items
/// with equal scores keep their original relative order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RerankPolicy {
    pub max_in_flight: NonZeroUsize,
    pub judge_failure_as: JudgeFailurePolicy,
}

impl Default for RerankPolicy {
    fn default() -> Self {
        RerankPolicy {
            max_in_flight: NonZeroUsize::new(8).unwrap(),
            judge_failure_as: JudgeFailurePolicy::Neither,
        }
    }
}

impl RerankPolicy {
    pub fn serial() -> Self {
        RerankPolicy {
            max_in_flight: NonZeroUsize::new(1).unwrap(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("item '{id}' carries no ground-truth label")]
    Unlabeled { id: ItemId },
    #[error("invalid judge configuration: {message}")]
    InvalidConfig { message: String },
    #[error("failed to build prompt")]
    Prompt(#[from] PromptError),
    #[error("chat backend failure")]
    Backend(#[from] LlmError),
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("item '{id}' carries no ground-truth label")]
    Unlabeled { id: ItemId },
    #[error("score {value} is outside [0, 1]")]
    OutOfRange { value: f64 },
    #[error("scoring backend failure")]
    Backend(#[from] LlmError),
    #[error("malformed scorer response: {message}")]
    MalformedResponse { message: String },
}

/// Result of one pairwise judgment, with per-call telemetry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgment {
    pub verdict: Verdict,
    /// Parse retries spent before this verdict (0 for clean replies).
    pub parse_retries: u32,
    /// True when retries were exhausted and `Neither` was substituted.
    pub parse_failed: bool,
    /// How many of the two input texts were truncated to fit the budget.
    pub truncated_inputs: u8,
    /// Raw reply text, retained only when the judge keeps transcripts.
    pub transcript: Option<String>,
}

impl Judgment {
    pub fn of(verdict: Verdict) -> Self {
        Judgment {
            verdict,
            parse_retries: 0,
            parse_failed: false,
            truncated_inputs: 0,
            transcript: None,
        }
    }
}

/// A pairwise preference judge: names the more harmful of two items, or
/// declares both harmless. `a` is presented first (Text A).
///
/// Implementations must tolerate concurrent invocation; the engine may
/// run up to `max_in_flight` judgments at once.
#[async_trait]
pub trait PairwiseJudge: Send + Sync {
    async fn judge(&self, a: &ContentItem, b: &ContentItem) -> Result<Judgment, JudgeError>;

    /// Identifier recorded as ranking provenance.
    fn name(&self) -> &str;
}

/// A per-item harm scorer returning values in `[0, 1]`.
#[async_trait]
pub trait HarmScorer: Send + Sync {
    async fn score(&self, item: &ContentItem) -> Result<HarmScore, ScorerError>;

    fn name(&self) -> &str;
}

/// Transcript of one judged pair, kept when verbose telemetry is on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub query: PairQuery,
    pub reply: String,
}

/// Counters for one rerank run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankTelemetry {
    /// Judge invocations issued (n·(n−1) for a complete run).
    pub judgments: u64,
    /// Parse retries spent across all judgments.
    pub parse_retries: u64,
    /// Judgments whose retries were exhausted (scored as `Neither`).
    pub parse_failures: u64,
    /// Judge hard failures substituted as `Neither` per policy.
    pub substituted_failures: u64,
    /// Input texts truncated to the prompt character budget.
    pub truncated_inputs: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcripts: Vec<TranscriptRecord>,
}

impl RerankTelemetry {
    pub fn absorb(&mut self, other: &RerankTelemetry) {
        self.judgments += other.judgments;
        self.parse_retries += other.parse_retries;
        self.parse_failures += other.parse_failures;
        self.substituted_failures += other.substituted_failures;
        self.truncated_inputs += other.truncated_inputs;
        self.transcripts.extend(other.transcripts.iter().cloned());
    }
}

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("judge failed on pair ({first}, {second})")]
    JudgeFailed {
        first: ItemId,
        second: ItemId,
        #[source]
        source: JudgeError,
        /// Telemetry accumulated up to the failure.
        telemetry: Box<RerankTelemetry>,
    },
    #[error("internal scoring inconsistency")]
    Scoring(#[from] DomainError),
}

#[derive(Debug, Error)]
pub enum RankError {
    #[error("scorer failed on item '{id}'")]
    ScorerFailed {
        id: ItemId,
        #[source]
        source: ScorerError,
    },
}

/// Full output of a pairwise rerank.
#[derive(Debug, Clone)]
pub struct RerankOutcome {
    pub ranked: RankedSequence,
    pub scores: ScoreTable,
    pub telemetry: RerankTelemetry,
}

/// Re-ranks `seq` by querying `judge` for every unordered pair in both
/// presentation orders and stable-sorting ascending by accumulated score.
///
/// Sequences with fewer than two items come back unchanged with zero
/// scores and no judgments.
pub async fn rerank_pairwise(
    seq: &ContentSequence,
    judge: &dyn PairwiseJudge,
    policy: &RerankPolicy,
) -> Result<RerankOutcome, RerankError> {
    let items = seq.items();
    let n = items.len();
    let mut table = ScoreTable::new(seq);
    let mut telemetry = RerankTelemetry::default();

    if n >= 2 {
        // Both presentation orders of each unordered pair, once each.
        let mut queries = Vec::with_capacity(n * (n - 1));
        for i in 0..n {
            for j in (i + 1)..n {
                queries.push((i, j));
                queries.push((j, i));
            }
        }

        let mut results = stream::iter(queries.into_iter().map(|(ai, bi)| {
            let a = &items[ai];
            let b = &items[bi];
            async move { (ai, bi, judge.judge(a, b).await) }
        }))
        .buffer_unordered(policy.max_in_flight.get());

        while let Some((ai, bi, result)) = results.next().await {
            telemetry.judgments += 1;
            match result {
                Ok(judgment) => {
                    telemetry.parse_retries += u64::from(judgment.parse_retries);
                    telemetry.parse_failures += u64::from(judgment.parse_failed);
                    telemetry.truncated_inputs += u64::from(judgment.truncated_inputs);
                    if let Some(reply) = judgment.transcript {
                        telemetry.transcripts.push(TranscriptRecord {
                            query: PairQuery {
                                first: items[ai].id().clone(),
                                second: items[bi].id().clone(),
                            },
                            reply,
                        });
                    }
                    match judgment.verdict {
                        Verdict::First => table.increment(items[ai].id())?,
                        Verdict::Second => table.increment(items[bi].id())?,
                        Verdict::Neither => {}
                    }
                }
                Err(source) => match policy.judge_failure_as {
                    JudgeFailurePolicy::Neither => telemetry.substituted_failures += 1,
                    JudgeFailurePolicy::Abort => {
                        return Err(RerankError::JudgeFailed {
                            first: items[ai].id().clone(),
                            second: items[bi].id().clone(),
                            source,
                            telemetry: Box::new(telemetry),
                        });
                    }
                },
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort: equal scores keep original platform order.
    order.sort_by_key(|&idx| table.get(items[idx].id()).unwrap_or(0));

    let ranked_items: Vec<ContentItem> = order.iter().map(|&idx| items[idx].clone()).collect();
    let scores: Vec<u64> = order
        .iter()
        .map(|&idx| u64::from(table.get(items[idx].id()).unwrap_or(0)))
        .collect();
    let ranked = RankedSequence::new(ranked_items, scores, judge.name());
    Ok(RerankOutcome {
        ranked,
        scores: table,
        telemetry,
    })
}

/// Ranks by a per-item harm score, least harmful first. The stored scores
/// are the raw `[0, 1]` scorer outputs scaled by
/// [`RankedSequence::SCORE_SCALE`].
pub async fn rank_by_score(
    seq: &ContentSequence,
    scorer: &dyn HarmScorer,
) -> Result<RankedSequence, RankError> {
    let items = seq.items();
    let futures = items.iter().map(|item| async move {
        scorer
            .score(item)
            .await
            .map_err(|source| RankError::ScorerFailed {
                id: item.id().clone(),
                source,
            })
    });
    let scores: Vec<HarmScore> = futures::future::try_join_all(futures).await?;

    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| scores[a].value().total_cmp(&scores[b].value()));

    let ranked_items: Vec<ContentItem> = order.iter().map(|&idx| items[idx].clone()).collect();
    let ranked_scores: Vec<u64> = order
        .iter()
        .map(|&idx| (scores[idx].value() * RankedSequence::SCORE_SCALE).round() as u64)
        .collect();
    Ok(RankedSequence::new(
        ranked_items,
        ranked_scores,
        scorer.name(),
    ))
}

/// The unmodified platform ordering: items unchanged, all scores zero.
pub fn identity_rank(seq: &ContentSequence) -> RankedSequence {
    RankedSequence::new(seq.items().to_vec(), vec![0; seq.len()], "original")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{validate_ranked, HarmLabel};
    use crate::judges::{OracleJudge, OracleScorer};
    use crate::metrics::ewn;
    use std::sync::atomic::{AtomicU64, Ordering};

    use HarmLabel::{Harmful as H, Harmless as N};

    fn seq(labels: &[HarmLabel]) -> ContentSequence {
        let items = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                ContentItem::labeled(format!("item{}", i + 1), format!("text {}", i + 1), l)
                    .unwrap()
            })
            .collect();
        ContentSequence::new(items).unwrap()
    }

    fn ids(ranked: &RankedSequence) -> Vec<&str> {
        ranked.items().iter().map(|i| i.id().as_str()).collect()
    }

    #[tokio::test]
    async fn oracle_rerank_hand_traced() {
        let s = seq(&[H, N, H, N]);
        let outcome = rerank_pairwise(&s, &OracleJudge, &RerankPolicy::default())
            .await
            .unwrap();
        assert_eq!(
            ids(&outcome.ranked),
            vec!["item2", "item4", "item1", "item3"]
        );
        // Harmless items untouched; each harmful item gets two points per
        // harmless partner plus one per harmful partner.
        assert_eq!(outcome.scores.get(&"item2".into()), Some(0));
        assert_eq!(outcome.scores.get(&"item4".into()), Some(0));
        assert_eq!(outcome.scores.get(&"item1".into()), Some(5));
        assert_eq!(outcome.scores.get(&"item3".into()), Some(5));
        assert_eq!(outcome.telemetry.judgments, 12);
        assert_eq!(validate_ranked(&s, &outcome.ranked), Ok(()));
    }

    #[tokio::test]
    async fn all_harmless_is_identity_with_zero_scores() {
        let s = seq(&[N, N, N, N]);
        let outcome = rerank_pairwise(&s, &OracleJudge, &RerankPolicy::default())
            .await
            .unwrap();
        assert_eq!(
            ids(&outcome.ranked),
            vec!["item1", "item2", "item3", "item4"]
        );
        assert!(outcome.ranked.scores().iter().all(|&s| s == 0));
    }

    #[tokio::test]
    async fn single_item_short_circuits() {
        let s = seq(&[H]);
        let outcome = rerank_pairwise(&s, &OracleJudge, &RerankPolicy::default())
            .await
            .unwrap();
        assert_eq!(outcome.telemetry.judgments, 0);
        assert_eq!(ids(&outcome.ranked), vec!["item1"]);
        assert_eq!(outcome.ranked.scores(), &[0]);
    }

    struct CountingJudge(AtomicU64);

    #[async_trait]
    impl PairwiseJudge for CountingJudge {
        async fn judge(&self, a: &ContentItem, b: &ContentItem) -> Result<Judgment, JudgeError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(Judgment::of(crate::judges::oracle_verdict(
                a.require_label()
                    .map_err(|_| JudgeError::Unlabeled { id: a.id().clone() })?,
                b.require_label()
                    .map_err(|_| JudgeError::Unlabeled { id: b.id().clone() })?,
            )))
        }

        fn name(&self) -> &str {
            "counting"
        }
    }

    #[tokio::test]
    async fn twenty_items_mean_380_judgments() {
        let labels: Vec<HarmLabel> = (0..20).map(|i| if i % 3 == 0 { H } else { N }).collect();
        let s = seq(&labels);
        let judge = CountingJudge(AtomicU64::new(0));
        let outcome = rerank_pairwise(&s, &judge, &RerankPolicy::default())
            .await
            .unwrap();
        assert_eq!(judge.0.load(Ordering::SeqCst), 380);
        assert_eq!(outcome.telemetry.judgments, 380);
    }

    #[tokio::test]
    async fn deterministic_across_concurrency_levels() {
        let labels: Vec<HarmLabel> = (0..12).map(|i| if i % 4 == 0 { H } else { N }).collect();
        let s = seq(&labels);
        let serial = rerank_pairwise(&s, &OracleJudge, &RerankPolicy::serial())
            .await
            .unwrap();
        let wide = rerank_pairwise(
            &s,
            &OracleJudge,
            &RerankPolicy {
                max_in_flight: NonZeroUsize::new(32).unwrap(),
                ..Default::default()
            },
        )
        .await
        .unwrap();
        assert_eq!(serial.ranked, wide.ranked);
        assert_eq!(serial.scores, wide.scores);
    }

    #[tokio::test]
    async fn oracle_rerank_always_reaches_perfect_ewn() {
        for labels in [
            vec![H, N, N, H, N],
            vec![N, H, H, H, N, N, H],
            vec![H, H, N],
        ] {
            let s = seq(&labels);
            let outcome = rerank_pairwise(&s, &OracleJudge, &RerankPolicy::default())
                .await
                .unwrap();
            let ranked_labels = outcome.ranked.labels().unwrap();
            assert_eq!(ewn(&ranked_labels).unwrap().value, 1.0, "labels {labels:?}");
        }
    }

    struct FlakyJudge {
        fail_first: AtomicU64,
    }

    #[async_trait]
    impl PairwiseJudge for FlakyJudge {
        async fn judge(&self, _a: &ContentItem, _b: &ContentItem) -> Result<Judgment, JudgeError> {
            if self
                .fail_first
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |v| v.checked_sub(1))
                .is_ok()
            {
                Err(JudgeError::Prompt(PromptError::NoExemplars))
            } else {
                Ok(Judgment::of(Verdict::Neither))
            }
        }

        fn name(&self) -> &str {
            "flaky"
        }
    }

    #[tokio::test]
    async fn failure_policy_neither_substitutes_and_counts() {
        let s = seq(&[N, H, N]);
        let judge = FlakyJudge {
            fail_first: AtomicU64::new(2),
        };
        let outcome = rerank_pairwise(&s, &judge, &RerankPolicy::default())
            .await
            .unwrap();
        assert_eq!(outcome.telemetry.judgments, 6);
        assert_eq!(outcome.telemetry.substituted_failures, 2);
    }

    #[tokio::test]
    async fn failure_policy_abort_carries_partial_telemetry() {
        let s = seq(&[N, H, N]);
        let judge = FlakyJudge {
            fail_first: AtomicU64::new(u64::MAX),
        };
        let policy = RerankPolicy {
            judge_failure_as: JudgeFailurePolicy::Abort,
            ..RerankPolicy::serial()
        };
        match rerank_pairwise(&s, &judge, &policy).await {
            Err(RerankError::JudgeFailed { telemetry, .. }) => {
                assert_eq!(telemetry.judgments, 1);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[tokio::test]
    async fn rank_by_score_oracle_two_level_sort() {
        let s = seq(&[H, N, H, N]);
        let ranked = rank_by_score(&s, &OracleScorer).await.unwrap();
        assert_eq!(ids(&ranked), vec!["item2", "item4", "item1", "item3"]);
        assert_eq!(ranked.scores(), &[0, 0, 1_000_000, 1_000_000],);
        assert_eq!(validate_ranked(&s, &ranked), Ok(()));
    }

    struct ConstantScorer(f64);

    #[async_trait]
    impl HarmScorer for ConstantScorer {
        async fn score(&self, _item: &ContentItem) -> Result<HarmScore, ScorerError> {
            HarmScore::new(self.0)
        }

        fn name(&self) -> &str {
            "constant"
        }
    }

    #[tokio::test]
    async fn rank_by_score_equal_scores_is_identity() {
        let s = seq(&[H, N, H, N]);
        let ranked = rank_by_score(&s, &ConstantScorer(0.5)).await.unwrap();
        assert_eq!(ids(&ranked), vec!["item1", "item2", "item3", "item4"]);
    }

    #[tokio::test]
    async fn rank_by_score_out_of_range_is_contract_violation() {
        let s = seq(&[H, N]);
        let err = rank_by_score(&s, &ConstantScorer(1.2)).await.unwrap_err();
        match err {
            RankError::ScorerFailed { source, .. } => {
                assert!(matches!(source, ScorerError::OutOfRange { .. }));
            }
        }
    }

    #[test]
    fn identity_rank_properties() {
        let s = seq(&[H, N, H]);
        let ranked = identity_rank(&s);
        assert_eq!(ids(&ranked), vec!["item1", "item2", "item3"]);
        assert_eq!(ranked.provenance(), "original");
        assert_eq!(validate_ranked(&s, &ranked), Ok(()));
        let single = seq(&[N]);
        assert_eq!(identity_rank(&single).len(), 1);
    }

    #[test]
    fn pair_query_rejects_self_pairs() {
        assert!(PairQuery::new("a".into(), "a".into()).is_none());
        assert!(PairQuery::new("a".into(), "b".into()).is_some());
    }
}
