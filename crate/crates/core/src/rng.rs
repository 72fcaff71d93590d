//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8, keyed by
//! `ChaCha8Rng::seed_from_u64(seed)` and separated into independent streams
//! with `set_stream`. ChaCha8 and the `seed_from_u64` key expansion
//! (PCG32 output, as in `rand_core`) are both fully specified and portable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids for the simulator and the trainer's shuffle. Noise injection
/// uses the sample index as the stream id instead.
pub(crate) mod stream {
    pub const CLASS_MEANS: u64 = 1;
    pub const ANCHOR_SHIFTS: u64 = 2;
    pub const REAL_SAMPLES: u64 = 3;
    pub const ANCHOR_SAMPLES: u64 = 4;
    pub const HELDOUT_SAMPLES: u64 = 5;
    pub const TRAIN_SHUFFLE: u64 = 6;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator owned by a single sample, so per-sample decisions do not depend
/// on iteration order.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    stream_rng(seed, index as u64)
}

/// Independent seed derived from a user seed and a salt.
pub(crate) fn derive_seed(seed: u64, salt: u64) -> u64 {
    // SplitMix64 finalizer.
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
