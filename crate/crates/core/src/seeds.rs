//! Deterministic seed derivation for per-stage, per-round and per-client RNG
//! streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with an ordered list of stream identifiers.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}

/// Stream tags, so that e.g. stage 1 round 2 never collides with a client id.
pub mod stream {
    pub const GROUPING: u64 = 1;
    pub const FUSION: u64 = 2;
    pub const SAMPLING: u64 = 3;
    pub const LOCAL: u64 = 4;
    pub const DATA: u64 = 5;
    pub const MODEL: u64 = 6;
    pub const TEACHER: u64 = 7;
}
