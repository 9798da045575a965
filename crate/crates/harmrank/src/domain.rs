//! Core data model: content items, sequences, labels, verdicts, and
//! ranking outputs shared by every other module.
//!
//! All types here are immutable after construction and enforce their
//! invariants in constructors, so they can be shared freely across tasks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by domain constructors and label-dependent operations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DomainError {
    #[error("item '{id}' has empty text after whitespace trimming")]
    EmptyText { id: ItemId },
    #[error("sequence must contain at least one item")]
    EmptySequence,
    #[error("duplicate item id '{id}' in sequence")]
    DuplicateId { id: ItemId },
    #[error("item '{id}' carries no ground-truth label")]
    Unlabeled { id: ItemId },
    #[error("unknown item id '{id}' for this score table")]
    UnknownId { id: ItemId },
    #[error("score for item '{id}' would exceed the per-item bound of {bound}")]
    ScoreBoundExceeded { id: ItemId, bound: u32 },
}

/// Binary ground-truth label for a content item.
///
/// Files encode `Harmful` as integer `1` and `Harmless` as `0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum HarmLabel {
    Harmful,
    Harmless,
}

impl HarmLabel {
    pub fn is_harmful(self) -> bool {
        matches!(self, HarmLabel::Harmful)
    }

    pub fn is_harmless(self) -> bool {
        matches!(self, HarmLabel::Harmless)
    }
}

impl From<HarmLabel> for u8 {
    fn from(label: HarmLabel) -> u8 {
        match label {
            HarmLabel::Harmful => 1,
            HarmLabel::Harmless => 0,
        }
    }
}

impl TryFrom<u8> for HarmLabel {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            1 => Ok(HarmLabel::Harmful),
            0 => Ok(HarmLabel::Harmless),
            other => Err(format!("invalid label {other} (expected 0 or 1)")),
        }
    }
}

/// Opaque identifier for a content item.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(String);

impl ItemId {
    pub fn new(id: impl Into<String>) -> Self {
        ItemId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        ItemId(s.to_string())
    }
}

impl From<String> for ItemId {
    fn from(s: String) -> Self {
        ItemId(s)
    }
}

/// One unit of text content, optionally carrying its ground-truth label
/// and informational harm-category tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentItem {
    id: ItemId,
    text: String,
    label: Option<HarmLabel>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    categories: BTreeSet<String>,
}

impl ContentItem {
    /// Builds an item, trimming surrounding whitespace from `text`.
    /// Text that is empty after trimming is rejected.
    pub fn new(
        id: impl Into<ItemId>,
        text: impl Into<String>,
        label: Option<HarmLabel>,
        categories: impl IntoIterator<Item = String>,
    ) -> Result<Self, DomainError> {
        let id = id.into();
        let text = text.into().trim().to_string();
        if text.is_empty() {
            return Err(DomainError::EmptyText { id });
        }
        Ok(ContentItem {
            id,
            text,
            label,
            categories: categories.into_iter().collect(),
        })
    }

    /// Convenience constructor for labeled items in tests and fixtures.
    pub fn labeled(
        id: impl Into<ItemId>,
        text: impl Into<String>,
        label: HarmLabel,
    ) -> Result<Self, DomainError> {
        Self::new(id, text, Some(label), [])
    }

    pub fn id(&self) -> &ItemId {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn label(&self) -> Option<HarmLabel> {
        self.label
    }

    pub fn categories(&self) -> &BTreeSet<String> {
        &self.categories
    }

    /// Ground-truth label, or an error naming this item.
    pub fn require_label(&self) -> Result<HarmLabel, DomainError> {
        self.label.ok_or_else(|| DomainError::Unlabeled {
            id: self.id.clone(),
        })
    }
}

/// An ordered sequence of distinct content items (a recommendation slate).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ContentItem>", into = "Vec<ContentItem>")]
pub struct ContentSequence {
    items: Vec<ContentItem>,
}

impl ContentSequence {
    pub fn new(items: Vec<ContentItem>) -> Result<Self, DomainError> {
        if items.is_empty() {
            return Err(DomainError::EmptySequence);
        }
        let mut seen = BTreeSet::new();
        for item in &items {
            if !seen.insert(item.id().clone()) {
                return Err(DomainError::DuplicateId {
                    id: item.id().clone(),
                });
            }
        }
        Ok(ContentSequence { items })
    }

    pub fn items(&self) -> &[ContentItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    /// Ordered ground-truth labels; errors on the first unlabeled item.
    pub fn labels(&self) -> Result<Vec<HarmLabel>, DomainError> {
        self.items.iter().map(|i| i.require_label()).collect()
    }
}

impl TryFrom<Vec<ContentItem>> for ContentSequence {
    type Error = DomainError;

    fn try_from(items: Vec<ContentItem>) -> Result<Self, Self::Error> {
        ContentSequence::new(items)
    }
}

impl From<ContentSequence> for Vec<ContentItem> {
    fn from(seq: ContentSequence) -> Self {
        seq.items
    }
}

/// Number of `Harmless` items in a fully labeled sequence.
pub fn count_harmless(seq: &ContentSequence) -> Result<usize, DomainError> {
    let labels = seq.labels()?;
    Ok(labels.iter().filter(|l| l.is_harmless()).count())
}

/// Outcome of one pairwise judgment over a presented (A, B) pair.
///
/// Maps onto the response tokens `A` / `B` / `NONE`: the verdict names the
/// more harmful item, or declares that neither is harmful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// The first-presented item (Text A) is the more harmful one.
    First,
    /// The second-presented item (Text B) is the more harmful one.
    Second,
    /// Neither item is harmful.
    Neither,
}

impl Verdict {
    /// The response token this verdict corresponds to.
    pub fn response_token(self) -> &'static str {
        match self {
            Verdict::First => "A",
            Verdict::Second => "B",
            Verdict::Neither => "NONE",
        }
    }

    /// Renders the canonical reply form, e.g. `Response=A`.
    pub fn render(self) -> String {
        format!("Response={}", self.response_token())
    }
}

/// Accumulated harm scores for the items of one sequence.
///
/// Keys are exactly the ids of the sequence being ranked; every value is
/// bounded by `2 * (n - 1)` since each item participates in that many
/// presentation-ordered queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScoreTable {
    entries: BTreeMap<ItemId, u32>,
    bound: u32,
}

impl ScoreTable {
    /// Zero-initialized table over the ids of `seq`.
    pub fn new(seq: &ContentSequence) -> Self {
        let entries = seq
            .items()
            .iter()
            .map(|item| (item.id().clone(), 0))
            .collect();
        let bound = 2 * (seq.len().saturating_sub(1)) as u32;
        ScoreTable { entries, bound }
    }

    /// Adds one point to `id`'s score.
    pub fn increment(&mut self, id: &ItemId) -> Result<(), DomainError> {
        let bound = self.bound;
        let slot = self
            .entries
            .get_mut(id)
            .ok_or_else(|| DomainError::UnknownId { id: id.clone() })?;
        if *slot >= bound {
            return Err(DomainError::ScoreBoundExceeded {
                id: id.clone(),
                bound,
            });
        }
        *slot += 1;
        Ok(())
    }

    pub fn get(&self, id: &ItemId) -> Option<u32> {
        self.entries.get(id).copied()
    }

    pub fn entries(&self) -> &BTreeMap<ItemId, u32> {
        &self.entries
    }
}

/// A re-ranked sequence: a permutation of some input sequence together
/// with the per-item scores that produced the order.
///
/// Scores are non-negative integers, non-decreasing along the list.
/// Score-based rankers store their `[0,1]` outputs scaled by
/// [`RankedSequence::SCORE_SCALE`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedSequence {
    items: Vec<ContentItem>,
    scores: Vec<u64>,
    provenance: String,
}

impl RankedSequence {
    /// Fixed-point factor used when integerizing real-valued scores.
    pub const SCORE_SCALE: f64 = 1_000_000.0;

    /// Assembles a ranked sequence. Callers are responsible for ordering;
    /// use [`validate_ranked`] to check the permutation and monotonicity
    /// invariants against the original sequence.
    pub fn new(items: Vec<ContentItem>, scores: Vec<u64>, provenance: impl Into<String>) -> Self {
        RankedSequence {
            items,
            scores,
            provenance: provenance.into(),
        }
    }

    pub fn items(&self) -> &[ContentItem] {
        &self.items
    }

    pub fn scores(&self) -> &[u64] {
        &self.scores
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Ordered ground-truth labels; errors on the first unlabeled item.
    pub fn labels(&self) -> Result<Vec<HarmLabel>, DomainError> {
        self.items.iter().map(|i| i.require_label()).collect()
    }
}

/// First violation found when checking a ranker output against its input.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum RankingViolation {
    #[error("score list length {scores} does not match item count {items}")]
    ScoreLengthMismatch { items: usize, scores: usize },
    #[error("id multiset mismatch: ranked output is not a permutation of the input ({detail})")]
    IdMultisetMismatch { detail: String },
    #[error("scores not non-decreasing at position {position}: {previous} then {current}")]
    ScoresNotMonotonic {
        position: usize,
        previous: u64,
        current: u64,
    },
}

/// Checks that `ranked` is a permutation of `original` with non-decreasing
/// scores. Returns the first violation found.
pub fn validate_ranked(
    original: &ContentSequence,
    ranked: &RankedSequence,
) -> Result<(), RankingViolation> {
    if ranked.scores().len() != ranked.items().len() {
        return Err(RankingViolation::ScoreLengthMismatch {
            items: ranked.items().len(),
            scores: ranked.scores().len(),
        });
    }

    let mut original_ids: Vec<&ItemId> = original.items().iter().map(|i| i.id()).collect();
    let mut ranked_ids: Vec<&ItemId> = ranked.items().iter().map(|i| i.id()).collect();
    original_ids.sort();
    ranked_ids.sort();
    if original_ids != ranked_ids {
        let missing: Vec<String> = original_ids
            .iter()
            .filter(|id| !ranked_ids.contains(id))
            .map(|id| id.to_string())
            .collect();
        let extra: Vec<String> = ranked_ids
            .iter()
            .filter(|id| !original_ids.contains(id))
            .map(|id| id.to_string())
            .collect();
        return Err(RankingViolation::IdMultisetMismatch {
            detail: format!(
                "{} vs {} items; missing: [{}], extra: [{}]",
                original_ids.len(),
                ranked_ids.len(),
                missing.join(", "),
                extra.join(", ")
            ),
        });
    }

    for (pos, window) in ranked.scores().windows(2).enumerate() {
        if window[1] < window[0] {
            return Err(RankingViolation::ScoresNotMonotonic {
                position: pos + 1,
                previous: window[0],
                current: window[1],
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, label: HarmLabel) -> ContentItem {
        ContentItem::labeled(id, format!("text for {id}"), label).unwrap()
    }

    fn seq(labels: &[HarmLabel]) -> ContentSequence {
        let items = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| item(&format!("item{}", i + 1), l))
            .collect();
        ContentSequence::new(items).unwrap()
    }

    use HarmLabel::{Harmful as H, Harmless as N};

    #[test]
    fn count_harmless_all_harmless() {
        assert_eq!(count_harmless(&seq(&[N, N, N, N, N])).unwrap(), 5);
    }

    #[test]
    fn count_harmless_mixed() {
        assert_eq!(count_harmless(&seq(&[H, N, H, N])).unwrap(), 2);
    }

    #[test]
    fn count_harmless_unlabeled_errors_with_id() {
        let items = vec![
            item("a", N),
            ContentItem::new("b", "unlabeled text", None, []).unwrap(),
        ];
        let seq = ContentSequence::new(items).unwrap();
        assert_eq!(
            count_harmless(&seq),
            Err(DomainError::Unlabeled {
                id: ItemId::from("b")
            })
        );
    }

    #[test]
    fn empty_text_rejected() {
        assert_eq!(
            ContentItem::new("x", "   \n\t ", Some(N), []),
            Err(DomainError::EmptyText {
                id: ItemId::from("x")
            })
        );
    }

    #[test]
    fn text_is_trimmed() {
        let item = ContentItem::new("x", "  hello  ", Some(N), []).unwrap();
        assert_eq!(item.text(), "hello");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let items = vec![item("a", N), item("a", H)];
        assert_eq!(
            ContentSequence::new(items).unwrap_err(),
            DomainError::DuplicateId {
                id: ItemId::from("a")
            }
        );
    }

    #[test]
    fn validate_identity_with_zero_scores_ok() {
        let s = seq(&[N, H, N]);
        let ranked = RankedSequence::new(s.items().to_vec(), vec![0, 0, 0], "original");
        assert_eq!(validate_ranked(&s, &ranked), Ok(()));
    }

    #[test]
    fn validate_dropped_id_is_multiset_mismatch() {
        let s = seq(&[N, H, N]);
        let ranked = RankedSequence::new(s.items()[..2].to_vec(), vec![0, 0], "broken");
        match validate_ranked(&s, &ranked) {
            Err(RankingViolation::IdMultisetMismatch { detail }) => {
                assert!(detail.contains("item3"), "{detail}");
            }
            other => panic!("unexpected {other:?}"),
        }
        // Same length but one id swapped for a foreign one.
        let mut items = s.items().to_vec();
        items[2] = item("ghost", N);
        let ranked = RankedSequence::new(items, vec![0, 0, 0], "broken");
        assert!(matches!(
            validate_ranked(&s, &ranked),
            Err(RankingViolation::IdMultisetMismatch { .. })
        ));
    }

    #[test]
    fn validate_non_monotonic_scores() {
        let s = seq(&[N, H, N]);
        let ranked = RankedSequence::new(s.items().to_vec(), vec![0, 2, 1], "broken");
        assert_eq!(
            validate_ranked(&s, &ranked),
            Err(RankingViolation::ScoresNotMonotonic {
                position: 2,
                previous: 2,
                current: 1
            })
        );
    }

    #[test]
    fn score_table_tracks_bound_and_unknown_ids() {
        let s = seq(&[N, H]);
        let mut table = ScoreTable::new(&s);
        let id = ItemId::from("item1");
        table.increment(&id).unwrap();
        table.increment(&id).unwrap();
        // n = 2 so the bound is 2·(n−1) = 2.
        assert_eq!(
            table.increment(&id),
            Err(DomainError::ScoreBoundExceeded {
                id: id.clone(),
                bound: 2
            })
        );
        assert_eq!(
            table.increment(&ItemId::from("nope")),
            Err(DomainError::UnknownId {
                id: ItemId::from("nope")
            })
        );
        assert_eq!(table.get(&id), Some(2));
    }

    #[test]
    fn harm_label_serde_uses_integer_encoding() {
        assert_eq!(serde_json::to_string(&HarmLabel::Harmful).unwrap(), "1");
        assert_eq!(serde_json::to_string(&HarmLabel::Harmless).unwrap(), "0");
        let back: HarmLabel = serde_json::from_str("1").unwrap();
        assert_eq!(back, HarmLabel::Harmful);
        let back: HarmLabel = serde_json::from_str("0").unwrap();
        assert_eq!(back, HarmLabel::Harmless);
        assert!(serde_json::from_str::<HarmLabel>("2").is_err());
    }

    #[test]
    fn verdict_render_tokens() {
        assert_eq!(Verdict::First.render(), "Response=A");
        assert_eq!(Verdict::Second.render(), "Response=B");
        assert_eq!(Verdict::Neither.render(), "Response=NONE");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Any output accepted by validate_ranked can be undone by
            /// sorting on original position.
            #[test]
            fn accepted_rankings_recover_original_by_position(
                labels in proptest::collection::vec(prop_oneof![Just(H), Just(N)], 1..=12),
                raw_scores in proptest::collection::vec(0u64..6, 1..=12),
            ) {
                let original = seq(&labels);
                let n = original.len();
                // Rank by an arbitrary per-item score, stably.
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by_key(|&i| raw_scores.get(i).copied().unwrap_or(0));
                let items: Vec<ContentItem> =
                    order.iter().map(|&i| original.items()[i].clone()).collect();
                let scores: Vec<u64> = order
                    .iter()
                    .map(|&i| raw_scores.get(i).copied().unwrap_or(0))
                    .collect();
                let ranked = RankedSequence::new(items, scores, "property");
                prop_assert_eq!(validate_ranked(&original, &ranked), Ok(()));

                let position_of = |id: &ItemId| {
                    original.items().iter().position(|item| item.id() == id).unwrap()
                };
                let mut recovered = ranked.items().to_vec();
                recovered.sort_by_key(|item| position_of(item.id()));
                prop_assert_eq!(recovered.as_slice(), original.items());
            }
        }
    }
}
