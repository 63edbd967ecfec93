//! Deterministic RNG streams.
//!
//! Every random decision in the pipeline draws from a stream keyed by a
//! master seed plus a small tuple of indices, so results do not depend on
//! the order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream domains, so walks, shuffles and initialisation never collide.
pub mod domain {
    pub const WALK: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const CLUSTER_INIT: u64 = 3;
    pub const EMBED: u64 = 4;
    pub const PARAM_INIT: u64 = 5;
    pub const BATCH: u64 = 6;
    pub const SVM: u64 = 7;
    pub const SYNTH: u64 = 8;
    pub const SPLIT: u64 = 9;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed and a key path into a single 64-bit seed.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(master: u64, keys: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, keys))
}
