//! Seed derivation.
//!
//! Every random stream in the pipeline is a ChaCha8 generator keyed by a
//! 64-bit seed. Child seeds are derived with one round of the SplitMix64
//! finalizer, so `derive(base, i)` for consecutive `i` gives unrelated but
//! reproducible streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function applied to `base + (index + 1) * gamma`.
pub fn derive(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a textual stream label (e.g. `"teacher"`).
pub fn derive_named(base: u64, label: &str) -> u64 {
    derive(base, crate::classifier::features::fnv1a64(label.as_bytes()))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
