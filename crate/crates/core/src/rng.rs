//! Seeded random streams.
//!
//! Every stochastic step (initialization, shuffling, missing-modality
//! selection, data generation) draws from its own ChaCha stream keyed by a
//! 64-bit seed. Child seeds are derived with a SplitMix64 finalizer so the
//! streams for different roles never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn tag_hash(tag: &str) -> u64 {
    // FNV-1a
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives an independent child seed from `(parent, role, index)`.
pub fn child_seed(parent: u64, role: &str, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ tag_hash(role)).wrapping_add(splitmix64(index)))
}
