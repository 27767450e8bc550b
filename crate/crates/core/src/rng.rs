//! Seeded random-number streams.
//!
//! Every stochastic component takes a `u64` seed and derives independent
//! ChaCha streams from `(seed, stream)` pairs, so per-label training, data
//! shuffles, and baseline draws are reproducible regardless of thread
//! scheduling or iteration order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Build a deterministic RNG for the given stream of a run seed.
///
/// Different `(seed, stream)` pairs give unrelated sequences; the same pair
/// always gives the same sequence.
pub fn derive_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
