//! Deterministic RNG stream derivation.
//!
//! Every source of randomness in the pipeline is a `ChaCha8Rng` derived from
//! the run seed plus a list of integer tags naming the consumer (window,
//! particle, subject, ...). Streams are independent of thread scheduling, so
//! results are identical for any `--threads` value.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod tag {
    pub const GIBBS: u64 = 1;
    pub const MOVE: u64 = 2;
    pub const EXTRAPOLATE: u64 = 3;
    pub const POP_CONTROL: u64 = 4;
    pub const SIM_SUBJECT: u64 = 5;
    pub const SIM_REPLICATE: u64 = 6;
    pub const WEIGHT: u64 = 7;
    pub const MODEL: u64 = 8;
    pub const G_DRAW: u64 = 9;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive an independent sub-seed from `seed` and a tag path.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(seed ^ 0x6a09e667f3bcc908);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t.wrapping_add(0x3c6ef372fe94f82b)));
    }
    state
}

/// Derive an independent stream from `seed` and a tag path.
pub fn derive_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}
