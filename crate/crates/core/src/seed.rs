//! Stable seed derivation, so serial and parallel runs draw identical streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes `base` and `index` into a new 64-bit seed (splitmix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a seed from a base seed and a stage label.
pub fn stage_seed(base: u64, stage: &str) -> u64 {
    stage
        .bytes()
        .fold(derive_seed(base, 0x5354_4147), |acc, b| derive_seed(acc, b as u64))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
