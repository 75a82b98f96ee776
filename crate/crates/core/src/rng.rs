//! Seeded random streams.
//!
//! Every stochastic stage draws from ChaCha8 so that results depend only on
//! the seed, not on platform or library defaults.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` derived from `seed`.
pub fn derived(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed ^ mix(stream)))
}

/// Fixed stream tags so stages never share a stream by accident.
pub mod stream {
    pub const WALKS: u64 = 0x5741_4c4b;
    pub const SKIPGRAM: u64 = 0x534b_4950;
    pub const NET_INIT: u64 = 0x4e49_4e54;
    pub const NET_TRAIN: u64 = 0x4e54_524e;
    pub const KMEANS: u64 = 0x4b4d_4e53;
}
