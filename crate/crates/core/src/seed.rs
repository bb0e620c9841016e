//! Seeded generators and child-seed derivation.
//!
//! All randomness uses ChaCha8. A child seed is the first output word of the
//! master seed's generator switched to stream `index`, so children can be
//! derived in any order (and in parallel) with identical results.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = rng(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic child seed number `index` of `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    stream_rng(master, index).next_u64()
}
