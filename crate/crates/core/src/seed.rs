//! Seed derivation for independent random streams.
//!
//! Every stochastic operation in the crate takes an explicit `u64` seed. Sweeps
//! derive per-trial seeds from the master seed with [`derive_seed`], which
//! folds a path of integers (axis index, trial index, stream tag) through the
//! SplitMix64 finalizer. Identical paths give identical seeds on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `path` into `master`, one component at a time.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(master), |acc, &p| mix64(acc ^ mix64(p.wrapping_mul(GOLDEN_GAMMA))))
}

/// Stream tags used when splitting a trial seed.
pub mod stream {
    pub const SIGNATURES: u64 = 1;
    pub const SCENARIO: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const SAMPLER: u64 = 4;
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
