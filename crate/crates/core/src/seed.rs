//! Seed derivation.
//!
//! A single global seed fans out to independent component seeds:
//! `derive_seed(global, name) = splitmix64(global ^ fnv1a64(name))`. Sub-streams
//! indexed by an integer (one per image, per trial) use
//! `derive_indexed(seed, i) = splitmix64(seed ^ splitmix64(i))`.
//!
//! All random streams are ChaCha8 so results do not depend on the platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a named component of an experiment.
pub fn derive_seed(global: u64, component: &str) -> u64 {
    splitmix64(global ^ fnv1a64(component.as_bytes()))
}

/// Seed for the `index`-th item of a stream.
pub fn derive_indexed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
