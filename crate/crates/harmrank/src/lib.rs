//! harmrank re-orders content sequences so that harmful items land at the
//! end, using pairwise preference judgments from an LLM (or synthetic
//! judges for offline verification), and measures exposure with three
//! rank metrics: TP-k, PP-k, and EWN.
//!
//! Modules:
//! - [`domain`] — items, sequences, labels, verdicts, ranked outputs.
//! - [`metrics`] — TP-k / PP-k / EWN over labeled orderings.
//! - [`rerank`] — the pairwise scoring engine and score-based ranking.
//! - [`judges`] — oracle, noisy, and LLM judges; per-item scorers.
//! - [`prompts`] — prompt strategies and exemplar selection (k-means).
//! - [`llm`] — chat/scoring HTTP clients with cache, retry, and limits.
//! - [`harness`] — dataset ingestion, sequence simulation, experiments,
//!   and report emission.

pub mod domain;
pub mod harness;
pub mod judges;
pub mod llm;
pub mod metrics;
pub mod prompts;
pub mod rerank;

pub use domain::{
    count_harmless, validate_ranked, ContentItem, ContentSequence, HarmLabel, ItemId,
    RankedSequence, ScoreTable, Verdict,
};
pub use metrics::{compute_all, ewn, per_pref_k, sequence_score, top_pref_k, MetricValue};
pub use rerank::{identity_rank, rank_by_score, rerank_pairwise, RerankPolicy};
