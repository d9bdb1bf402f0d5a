//! Deterministic RNG streams keyed by `(seed, tag, a, b)`.
//!
//! Every random draw in the crate comes from a stream derived here so results
//! do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_PROPAGATE: u64 = 2;
pub(crate) const TAG_RESAMPLE: u64 = 3;
pub(crate) const TAG_KMEANS: u64 = 4;
pub(crate) const TAG_NOISE: u64 = 5;
pub(crate) const TAG_TRAJECTORY: u64 = 6;
pub(crate) const TAG_RANGE: u64 = 7;
pub(crate) const TAG_SCENE: u64 = 8;

pub(crate) fn derive(seed: u64, tag: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(seed ^ splitmix(tag)) ^ a) ^ b)
}

pub(crate) fn stream(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tag, a, b))
}
