//! Seeded sequence simulation.
//!
//! Each simulated sequence draws a fixed number of harmful items
//! (`round(harm_fraction * n)`) and fills the rest with harmless items,
//! both uniformly without replacement within the sequence, then shuffles
//! positions. Items may recur across different sequences. All randomness
//! flows from per-sequence sub-generators derived from (master seed, harm
//! fraction, sequence index), so results are independent of evaluation
//! order and concurrency.

use rand::seq::{index, SliceRandom};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::domain::{ContentItem, ContentSequence, HarmLabel};

use super::HarnessError;

fn sequence_rng(seed: u64, harm_fraction: f64, sequence_index: usize) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"harmrank.sequence");
    hasher.update(seed.to_le_bytes());
    hasher.update(harm_fraction.to_bits().to_le_bytes());
    hasher.update((sequence_index as u64).to_le_bytes());
    let bytes: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(bytes)
}

/// Stable sub-seed for a named component (e.g. a noisy judge) of a run.
pub fn derive_seed(master: u64, scope: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"harmrank.scope");
    hasher.update(master.to_le_bytes());
    hasher.update(scope.as_bytes());
    let bytes: [u8; 32] = hasher.finalize().into();
    u64::from_le_bytes(bytes[..8].try_into().expect("digest is long enough"))
}

/// Number of harmful items per sequence for a given fraction and length.
pub fn harmful_count(n: usize, harm_fraction: f64) -> usize {
    (harm_fraction * n as f64).round() as usize
}

/// Simulates `m` sequences of length `n` from `items`.
pub fn sample_sequences(
    items: &[ContentItem],
    n: usize,
    m: usize,
    harm_fraction: f64,
    seed: u64,
) -> Result<Vec<ContentSequence>, HarnessError> {
    let harmful: Vec<&ContentItem> = items
        .iter()
        .filter(|i| i.label() == Some(HarmLabel::Harmful))
        .collect();
    let harmless: Vec<&ContentItem> = items
        .iter()
        .filter(|i| i.label() == Some(HarmLabel::Harmless))
        .collect();

    let h = harmful_count(n, harm_fraction);
    if h > n {
        return Err(HarnessError::Config {
            message: format!("harm fraction {harm_fraction} exceeds 1.0"),
        });
    }
    if harmful.len() < h {
        return Err(HarnessError::Sampling {
            class: "harmful",
            required: h,
            available: harmful.len(),
        });
    }
    if harmless.len() < n - h {
        return Err(HarnessError::Sampling {
            class: "harmless",
            required: n - h,
            available: harmless.len(),
        });
    }

    let mut sequences = Vec::with_capacity(m);
    for sequence_index in 0..m {
        let mut rng = sequence_rng(seed, harm_fraction, sequence_index);
        let mut chosen: Vec<ContentItem> = Vec::with_capacity(n);
        for idx in index::sample(&mut rng, harmful.len(), h) {
            chosen.push(harmful[idx].clone());
        }
        for idx in index::sample(&mut rng, harmless.len(), n - h) {
            chosen.push(harmless[idx].clone());
        }
        chosen.shuffle(&mut rng);
        sequences.push(
            ContentSequence::new(chosen).map_err(|e| HarnessError::Internal {
                message: format!("sampled sequence invalid: {e}"),
            })?,
        );
    }
    Ok(sequences)
}
