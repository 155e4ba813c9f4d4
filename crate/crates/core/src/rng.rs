//! Deterministic, stream-splittable random number generation.
//!
//! Every stochastic component in the crate draws from ChaCha8 keyed by an
//! explicit `u64` seed. ChaCha exposes 2^64 independent streams per seed,
//! which gives block-splittable generation: worker `k` of a parallel job
//! draws from `stream_rng(seed, k)` and produces the same values no matter
//! how many workers run or in what order blocks complete. Nothing in the
//! crate ever touches OS entropy.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

/// An independent generator for block `stream` of a job keyed by `seed`.
///
/// Streams with distinct `(seed, stream)` pairs are statistically
/// independent; identical pairs reproduce identical draws on every platform.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Convenience for single-stream jobs.
pub fn seeded_rng(seed: u64) -> Rng {
    stream_rng(seed, 0)
}
