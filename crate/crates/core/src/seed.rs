//! Seed derivation.
//!
//! Every random draw in the pipeline comes from a [`ChaCha8Rng`] seeded with
//! a value derived from `(top-level seed, stage name, utterance id)`. The
//! derivation hashes the triple with SHA-256 so that per-utterance streams are
//! independent of processing order and thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive(seed: u64, stage: &str, key: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((stage.len() as u64).to_le_bytes());
    hasher.update(stage.as_bytes());
    hasher.update(key.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(seed: u64, stage: &str, key: &str) -> Rng {
    rng(derive(seed, stage, key))
}
