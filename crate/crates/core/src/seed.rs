//! Seed derivation for per-episode and per-stream randomness.
//!
//! Every random stream is a ChaCha8 generator seeded from a 64-bit value
//! derived as `splitmix64(base ^ splitmix64(index + 0x9E3779B97F4A7C15))`,
//! applied once for the episode index and once more for the stream tag.
//! Output is bit-identical within one build of this crate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags so that episode sampling, policy randomness and parameter
/// init never share a generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Episode = 0,
    Policy = 1,
    Init = 2,
    Synthetic = 3,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn mix(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

pub fn derive_seed(base: u64, index: u64, stream: Stream) -> u64 {
    mix(mix(base, index), stream as u64)
}

pub fn rng_for(base: u64, index: u64, stream: Stream) -> Rng {
    Rng::seed_from_u64(derive_seed(base, index, stream))
}
