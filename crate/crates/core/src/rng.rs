//! Seed handling.
//!
//! Every random stream in the crate is a [`ChaCha8Rng`] seeded from an
//! explicit 64-bit value. Independent streams (subsample `b`, replication
//! `r`, ...) get their seed from [`derive_seed`], so the output never depends
//! on which thread ran which iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout: ChaCha with 8 rounds, portable across
/// platforms and pointer widths.
pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer (Steele, Lea & Flood).
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `index` under a master `seed`:
/// `splitmix64(seed ^ splitmix64(index))`.
#[inline]
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(seed: u64, index: u64) -> StreamRng {
    stream(derive_seed(seed, index))
}
