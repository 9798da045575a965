//! Exposure metrics over labeled sequences: Top-Pref-k (TP-k), Per-Pref-k
//! (PP-k), and Exponentially Weighted Normalization (EWN).
//!
//! All three are pure functions of an ordered label list and are bounded
//! in `[0, 1]` with higher values meaning less harmful exposure:
//!
//! - **TP-k** — fraction of harmless items among the first `k`.
//! - **PP-k** — 1-based index of the `k`-th harmful item divided by `n`;
//!   undefined when the sequence holds fewer than `k` harmful items.
//! - **EWN** — rank-weighted harmlessness score `S = Σ 2^(1−i)·[harmless]`
//!   normalized between the worst (0) and best (1) ordering of the same
//!   label multiset, so sequences of different lengths and harm ratios
//!   compare on one scale.
//!
//! Single-class sequences (all harmful or all harmless) make the EWN
//! normalization degenerate (`S_max = S_min`); they evaluate to `1.0` and
//! are flagged so downstream aggregation can exclude them.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::HarmLabel;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("k = {k} is out of range for a sequence of length {n} (need 1 <= k <= n)")]
    KOutOfRange { k: usize, n: usize },
    #[error("k must be at least 1")]
    KZero,
    #[error("sequence must contain at least one label")]
    EmptySequence,
}

/// A metric outcome: either a defined value in `[0, 1]` or undefined
/// (rendered as `-` in reports).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue(Option<f64>);

impl MetricValue {
    pub fn defined(value: f64) -> Self {
        debug_assert!(
            value.is_finite() && (0.0..=1.0).contains(&value),
            "metric values lie in [0, 1], got {value}"
        );
        MetricValue(Some(value))
    }

    pub fn undefined() -> Self {
        MetricValue(None)
    }

    pub fn is_defined(&self) -> bool {
        self.0.is_some()
    }

    pub fn value(&self) -> Option<f64> {
        self.0
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("-"),
        }
    }
}

impl Serialize for MetricValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MetricValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(MetricValue(Option::<f64>::deserialize(deserializer)?))
    }
}

/// Fraction of harmless items among the first `k` of the sequence.
///
/// Always defined. Requires `1 <= k <= n`.
pub fn top_pref_k(labels: &[HarmLabel], k: usize) -> Result<MetricValue, MetricsError> {
    let n = labels.len();
    if n == 0 {
        return Err(MetricsError::EmptySequence);
    }
    if k == 0 || k > n {
        return Err(MetricsError::KOutOfRange { k, n });
    }
    let harmless = labels[..k].iter().filter(|l| l.is_harmless()).count();
    Ok(MetricValue::defined(harmless as f64 / k as f64))
}

/// Fraction of the sequence consumed on reaching the `k`-th harmful item:
/// the minimal 1-based prefix length `m` holding `k` harmful items,
/// divided by `n`. Undefined when fewer than `k` items are harmful.
pub fn per_pref_k(labels: &[HarmLabel], k: usize) -> Result<MetricValue, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    if k == 0 {
        return Err(MetricsError::KZero);
    }
    let n = labels.len();
    let mut seen = 0usize;
    for (idx, label) in labels.iter().enumerate() {
        if label.is_harmful() {
            seen += 1;
            if seen == k {
                return Ok(MetricValue::defined((idx + 1) as f64 / n as f64));
            }
        }
    }
    Ok(MetricValue::undefined())
}

/// Rank-weighted harmlessness score `S = Σ_{i=1..n} 2^(1−i) · [harmless_i]`.
///
/// Position weights halve with each rank, so harmless content placed early
/// contributes most. `S` itself depends on `n` and the harm ratio; see
/// [`ewn`] for the normalized, comparable version.
pub fn sequence_score(labels: &[HarmLabel]) -> f64 {
    labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_harmless())
        .map(|(idx, _)| 2f64.powi(-(idx as i32)))
        .sum()
}

/// EWN outcome: the normalized value plus a degeneracy marker for
/// single-class sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwnOutcome {
    pub value: f64,
    pub degenerate: bool,
}

/// Normalizes [`sequence_score`] between the worst possible ordering of the
/// same labels (0.0) and the best (1.0).
///
/// With `p` harmless among `n` items, the extremes have closed forms from
/// the geometric series: `S_max = 2·(1 − 2^(−p))` (all harmless first) and
/// `S_min = 2^(p−n+1) − 2^(1−n)` (all harmless last). Single-class
/// sequences (`p = 0` or `p = n`) leave nothing to reorder; they return
/// `1.0` with `degenerate` set.
pub fn ewn(labels: &[HarmLabel]) -> Result<EwnOutcome, MetricsError> {
    let n = labels.len();
    if n == 0 {
        return Err(MetricsError::EmptySequence);
    }
    let p = labels.iter().filter(|l| l.is_harmless()).count();
    if p == 0 || p == n {
        return Ok(EwnOutcome {
            value: 1.0,
            degenerate: true,
        });
    }
    let s = sequence_score(labels);
    let s_max = 2.0 * (1.0 - 2f64.powi(-(p as i32)));
    let s_min = 2f64.powi(p as i32 - n as i32 + 1) - 2f64.powi(1 - n as i32);
    Ok(EwnOutcome {
        value: (s - s_min) / (s_max - s_min),
        degenerate: false,
    })
}

/// All metrics for one labeled sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    /// TP-k per requested k. Always defined.
    pub tp: BTreeMap<usize, MetricValue>,
    /// PP-k per requested k. Undefined entries mean fewer than k harmful items.
    pub pp: BTreeMap<usize, MetricValue>,
    pub ewn: f64,
    pub ewn_degenerate: bool,
}

/// Evaluates TP-k for each `k_tp`, PP-k for each `k_pp`, and EWN, in one
/// record. `k_tp` entries must satisfy `1 <= k <= n`; `k_pp` entries must
/// be at least 1.
pub fn compute_all(
    labels: &[HarmLabel],
    k_tp: &[usize],
    k_pp: &[usize],
) -> Result<SequenceMetrics, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    let mut tp = BTreeMap::new();
    for &k in k_tp {
        tp.insert(k, top_pref_k(labels, k)?);
    }
    let mut pp = BTreeMap::new();
    for &k in k_pp {
        pp.insert(k, per_pref_k(labels, k)?);
    }
    let outcome = ewn(labels)?;
    Ok(SequenceMetrics {
        tp,
        pp,
        ewn: outcome.value,
        ewn_degenerate: outcome.degenerate,
    })
}
