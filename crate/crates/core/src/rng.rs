//! Seed discipline.
//!
//! Every random stream is derived from one 64-bit master seed by hashing the master seed together
//! with a component label and an index. Streams never share state, so serial and parallel runs
//! consume identical randomness as long as work is partitioned by the same indices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Derives the seed of stream `(label, index)` under `master`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(master: u64, label: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, label, index))
}

/// Hashes a word sequence into a stream index, used to key streams by transcript or forecast
/// prefixes.
pub fn index_of(words: impl IntoIterator<Item = u64>) -> u64 {
    let mut hasher = Sha256::new();
    for w in words {
        hasher.update(w.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_labelled() {
        let a: u64 = stream(7, "estimator", 0).random();
        let b: u64 = stream(7, "estimator", 0).random();
        let c: u64 = stream(7, "estimator", 1).random();
        let d: u64 = stream(7, "attack", 0).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn label_length_is_part_of_the_key() {
        assert_ne!(derive_seed(1, "ab", 0), derive_seed(1, "a", 0x62));
    }
}
