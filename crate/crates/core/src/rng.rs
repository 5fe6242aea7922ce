//! Deterministic random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha::ChaCha8Rng`).
//! A run seed is expanded into independent streams by seeding the generator
//! with the 64-bit run seed and selecting the 64-bit ChaCha stream id, so
//! scene `i` of a dataset always reads stream [`streams::SCENE_BASE`]` + i`
//! regardless of how many other scenes are generated or in which order.
//! ChaCha output is defined on 32-bit words, so the sequences are identical
//! across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Reserved stream ids. Scene streams start at `SCENE_BASE`.
pub mod streams {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const BATCHES: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const TEACHER_FORCING: u64 = 5;
    pub const PRIOR: u64 = 6;
    pub const FEATURES: u64 = 7;
    pub const SCENE_BASE: u64 = 1 << 32;
}

/// Generator for `stream` of the run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
