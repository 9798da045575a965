//! Embedding ingestion, seeded k-means, and nearest-to-centroid exemplar
//! selection for the few-shot strategy.
//!
//! Vectors are L2-normalized on ingestion so Euclidean k-means behaves
//! like cosine clustering, which is the usual setup for text embeddings.
//! Clustering is fully deterministic given (inputs, k, seed).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{ContentItem, ItemId};

const CONVERGENCE_TOL: f64 = 1e-6;
const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("k must be at least 1")]
    KZero,
    #[error("k = {k} exceeds the number of points ({points})")]
    KTooLarge { k: usize, points: usize },
    #[error("embedding vectors must have at least one dimension")]
    EmptyVector { id: ItemId },
    #[error("embedding dimension mismatch for '{id}': expected {expected}, found {found}")]
    DimensionMismatch {
        id: ItemId,
        expected: usize,
        found: usize,
    },
    #[error("duplicate embedding id '{id}'")]
    DuplicateId { id: ItemId },
    #[error("no embedding available for item '{id}'")]
    MissingEmbedding { id: ItemId },
    #[error("embedding value for '{id}' is not finite")]
    NotFinite { id: ItemId },
    #[error("requested {requested} exemplars but only {available} items are available")]
    NotEnoughItems { requested: usize, available: usize },
    #[error("failed to read embeddings file: {0}")]
    Io(#[from] std::io::Error),
    #[error("embeddings file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Item-id-keyed embedding vectors of one uniform dimension, L2-normalized.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    dim: usize,
    vectors: BTreeMap<ItemId, Vec<f64>>,
}

impl EmbeddingSet {
    /// Ingests raw vectors, checking dimensions and normalizing each to
    /// unit length. Zero vectors are kept as-is (there is no direction to
    /// normalize).
    pub fn from_vectors(
        entries: impl IntoIterator<Item = (ItemId, Vec<f64>)>,
    ) -> Result<Self, ClusterError> {
        let mut dim = None;
        let mut vectors = BTreeMap::new();
        for (id, mut vector) in entries {
            if vector.is_empty() {
                return Err(ClusterError::EmptyVector { id });
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(ClusterError::NotFinite { id });
            }
            match dim {
                None => dim = Some(vector.len()),
                Some(expected) if expected != vector.len() => {
                    return Err(ClusterError::DimensionMismatch {
                        id,
                        expected,
                        found: vector.len(),
                    });
                }
                Some(_) => {}
            }
            let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in &mut vector {
                    *v /= norm;
                }
            }
            if vectors.insert(id.clone(), vector).is_some() {
                return Err(ClusterError::DuplicateId { id });
            }
        }
        Ok(EmbeddingSet {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    /// Loads a JSONL file with one `{"id": ..., "vector": [...]}` record
    /// per line.
    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self, ClusterError> {
        #[derive(Deserialize)]
        struct Record {
            id: String,
            vector: Vec<f64>,
        }

        let file = File::open(path)?;
        let mut entries = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line).map_err(|e| ClusterError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            entries.push((ItemId::new(record.id), record.vector));
        }
        Self::from_vectors(entries)
    }

    pub fn get(&self, id: &ItemId) -> Option<&[f64]> {
        self.vectors.get(id).map(|v| v.as_slice())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Cluster assignments (one entry per input point) and final centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansOutcome {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
}

fn seeded_rng(seed: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"harmrank.kmeans");
    hasher.update(seed.to_le_bytes());
    let bytes: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(bytes)
}

/// Weighted index draw over non-negative weights. Falls back to a uniform
/// draw when all weights are zero (duplicate points).
fn weighted_pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return rng.random_range(0..weights.len());
    }
    let target = rng.random_range(0.0..total);
    let mut acc = 0.0;
    for (idx, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return idx;
        }
    }
    weights.len() - 1
}

fn kmeans_plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    let mut weights = vec![0.0; points.len()];
    while centroids.len() < k {
        for (i, point) in points.iter().enumerate() {
            weights[i] = centroids
                .iter()
                .map(|c| squared_distance(point, c))
                .fold(f64::INFINITY, f64::min);
        }
        let choice = weighted_pick(rng, &weights);
        centroids.push(points[choice].clone());
    }
    centroids
}

/// Assigns each point to its nearest centroid (ties to the lowest index),
/// then repairs empty clusters by claiming the point farthest from its
/// assigned centroid, drawn from clusters that can spare one.
fn assign(points: &[Vec<f64>], centroids: &mut [Vec<f64>]) -> Vec<usize> {
    let k = centroids.len();
    let mut assignments = vec![0usize; points.len()];
    let mut sizes = vec![0usize; k];
    for (i, point) in points.iter().enumerate() {
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let d = squared_distance(point, centroid);
            if d < best_dist {
                best_dist = d;
                best = c;
            }
        }
        assignments[i] = best;
        sizes[best] += 1;
    }

    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        // Farthest point from its centroid, considering only donor
        // clusters that would stay non-empty. Ties go to the lowest
        // point index.
        let mut candidate = None;
        let mut candidate_dist = -1.0;
        for (i, point) in points.iter().enumerate() {
            let home = assignments[i];
            if sizes[home] < 2 {
                continue;
            }
            let d = squared_distance(point, &centroids[home]);
            if d > candidate_dist {
                candidate_dist = d;
                candidate = Some(i);
            }
        }
        if let Some(i) = candidate {
            sizes[assignments[i]] -= 1;
            assignments[i] = empty;
            sizes[empty] += 1;
            centroids[empty] = points[i].clone();
        }
    }
    assignments
}

fn centroid_means(
    points: &[Vec<f64>],
    assignments: &[usize],
    k: usize,
    dim: usize,
) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (point, &cluster) in points.iter().zip(assignments) {
        counts[cluster] += 1;
        for (s, v) in sums[cluster].iter_mut().zip(point) {
            *s += v;
        }
    }
    for (sum, &count) in sums.iter_mut().zip(&counts) {
        if count > 0 {
            for s in sum.iter_mut() {
                *s /= count as f64;
            }
        }
    }
    sums
}

/// Lloyd's algorithm with k-means++ initialization from a seeded
/// generator. Stops when the largest centroid movement drops below 1e-6
/// or after 100 iterations. The final assignment never leaves a cluster
/// empty (requires `k <= points.len()`).
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KmeansOutcome, ClusterError> {
    if k == 0 {
        return Err(ClusterError::KZero);
    }
    if k > points.len() {
        return Err(ClusterError::KTooLarge {
            k,
            points: points.len(),
        });
    }
    let dim = points[0].len();
    let mut rng = seeded_rng(seed);
    let mut centroids = kmeans_plus_plus_init(points, k, &mut rng);

    for _ in 0..MAX_ITERATIONS {
        let assignments = assign(points, &mut centroids);
        let updated = centroid_means(points, &assignments, k, dim);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(old, new)| distance(old, new))
            .fold(0.0, f64::max);
        centroids = updated;
        if shift < CONVERGENCE_TOL {
            break;
        }
    }

    // One final pass so assignments are consistent with the returned
    // centroids (including any empty-cluster repair).
    let assignments = assign(points, &mut centroids);
    Ok(KmeansOutcome {
        assignments,
        centroids,
    })
}

/// A selected exemplar: the item nearest to its cluster centroid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub id: ItemId,
    pub text: String,
}

/// Clusters `items` into `count` groups over their embeddings and picks,
/// from each cluster, the member closest to the centroid (ties broken by
/// lexicographic item id). Output is ordered by cluster index.
pub fn select_exemplars(
    items: &[ContentItem],
    embeddings: &EmbeddingSet,
    count: usize,
    seed: u64,
) -> Result<Vec<Exemplar>, ClusterError> {
    if count == 0 {
        return Err(ClusterError::KZero);
    }
    if count > items.len() {
        return Err(ClusterError::NotEnoughItems {
            requested: count,
            available: items.len(),
        });
    }
    let points: Vec<Vec<f64>> = items
        .iter()
        .map(|item| {
            embeddings
                .get(item.id())
                .map(|v| v.to_vec())
                .ok_or_else(|| ClusterError::MissingEmbedding {
                    id: item.id().clone(),
                })
        })
        .collect::<Result<_, _>>()?;

    let outcome = kmeans(&points, count, seed)?;
    let mut selected = Vec::with_capacity(count);
    for cluster in 0..count {
        let mut best: Option<(f64, &ContentItem)> = None;
        for (idx, item) in items.iter().enumerate() {
            if outcome.assignments[idx] != cluster {
                continue;
            }
            let d = distance(&points[idx], &outcome.centroids[cluster]);
            let closer = match &best {
                None => true,
                Some((best_d, best_item)) => {
                    d < *best_d || (d == *best_d && item.id() < best_item.id())
                }
            };
            if closer {
                best = Some((d, item));
            }
        }
        // Guaranteed by the empty-cluster repair in `kmeans`.
        let (_, item) = best.expect("kmeans left a cluster empty");
        selected.push(Exemplar {
            id: item.id().clone(),
            text: item.text().to_string(),
        });
    }
    Ok(selected)
}
