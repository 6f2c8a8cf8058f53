//! Seeded random streams.
//!
//! Every consumer owns a ChaCha8 generator. A stream is addressed by a
//! `(seed, stream)` pair: the seed is expanded into the 256-bit key and the
//! stream id selects one of the 2^64 independent counter sequences, so
//! derived generators never overlap and are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids used inside the library. Kept in one place so that two
/// consumers never share a sequence.
pub mod streams {
    pub const ENV: u64 = 1;
    pub const EXPLORATION: u64 = 2;
    pub const REPLAY: u64 = 3;
    pub const INIT: u64 = 4;
    pub const EVAL_ENV: u64 = 5;
    pub const EPISODE: u64 = 6;
}

/// Generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Deterministic 64-bit mix used to derive child seeds (splitmix64 finalizer).
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
