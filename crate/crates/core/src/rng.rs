//! Seeded random streams.
//!
//! Every stochastic operation draws from ChaCha8 seeded with a 64-bit value
//! via `SeedableRng::seed_from_u64`. Sub-streams are derived by mixing a
//! stream tag into the seed so that independent consumers never share
//! state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives a child seed from `seed` and a stream tag (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, tag: u64) -> Rng {
    seeded(derive_seed(seed, tag))
}
