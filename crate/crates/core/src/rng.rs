//! Named random sub-streams.
//!
//! Every stochastic stage draws from `substream(seed, name, index)` so that
//! family sampling, label noise, initialization and shuffling can be replayed
//! independently of each other from one user seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub const FAMILY: &str = "family";
pub const NOISE: &str = "noise";
pub const INIT: &str = "init";
pub const SHUFFLE: &str = "shuffle";

pub fn substream(seed: u64, name: &str, index: u64) -> Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update(index.to_le_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Derives a child seed (used when a per-item seed must be recorded).
pub fn derive_seed(seed: u64, name: &str, index: u64) -> u64 {
    use rand::RngCore;
    substream(seed, name, index).next_u64()
}
