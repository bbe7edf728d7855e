//! Deterministic seed derivation.
//!
//! Every random draw in a run is made from a ChaCha stream seeded by a value
//! derived from the master seed and a path of integers (grid point, trial,
//! purpose tag). Derivation is a SHA-256 hash of the little-endian path, so
//! parallel trials never share RNG state and the result does not depend on
//! execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Purpose tags used to split one trial seed into independent streams.
pub mod tag {
    pub const WEIGHTS: u64 = 1;
    pub const GRAPH: u64 = 2;
    pub const SIGNAL: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const DEPLOY: u64 = 5;
    pub const SCHEDULE: u64 = 6;
}

/// Hash `(master, path...)` down to a 64-bit seed.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"afcs-seed");
    hasher.update(master.to_le_bytes());
    for p in path {
        hasher.update(p.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

/// Seed for trial `trial` of grid point `point`.
pub fn trial_seed(master: u64, point: usize, trial: usize) -> u64 {
    derive(master, &[point as u64, trial as u64])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(seed: u64, purpose: u64) -> ChaCha8Rng {
    rng(derive(seed, &[purpose]))
}
