//! Seeded random streams.
//!
//! Every stochastic routine in the crate draws from a [`SimRng`], the ChaCha8
//! stream cipher from `rand_chacha`. Its output depends only on the seed and
//! stream number, so runs are bit-reproducible across platforms.

use rand::SeedableRng;

pub type SimRng = rand_chacha::ChaCha8Rng;

/// Generator for `seed`, on stream 0.
pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Independent stream `stream` derived from `seed`; used to give parallel
/// workers non-overlapping sequences.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
