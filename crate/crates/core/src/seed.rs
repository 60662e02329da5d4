//! Seed derivation for replicated experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// SplitMix64 finaliser applied to `seed + (r + 1) * golden`.
///
/// Every replicate `r` of a study gets `mix(seed, r)` so that results do not
/// depend on scheduling order.
pub fn mix(seed: u64, r: u64) -> u64 {
    let mut z = seed.wrapping_add(r.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
