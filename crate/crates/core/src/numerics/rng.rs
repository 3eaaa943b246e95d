//! Seed handling: one 64-bit run seed fans out into named, independent streams.
//!
//! Every source of randomness in the crate (weight init, data order, gradient
//! check sampling) draws from its own stream so that consuming randomness in
//! one subsystem never shifts another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Canonical stream names.
pub mod streams {
    pub const INIT: &str = "init";
    pub const DATA: &str = "data";
    /// Reserved: the models here are trained without dropout.
    pub const DROPOUT_NONE: &str = "dropout-none";
    pub const GRADCHECK: &str = "gradcheck";
}

/// Deterministic RNG for `(seed, stream)`. Distinct stream names give
/// independent sequences; the same pair always gives the same sequence.
pub fn stream_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    for (i, &b) in stream.as_bytes().iter().enumerate() {
        let slot = 8 + (i % 24);
        key[slot] = key[slot].wrapping_mul(31) ^ b.rotate_left((i / 24) as u32);
    }
    ChaCha8Rng::from_seed(key)
}
