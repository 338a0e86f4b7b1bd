//! Seeded random streams.
//!
//! Every replica or Monte Carlo sample gets its own ChaCha stream derived
//! from `(seed, stream)`, so results do not depend on thread scheduling.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Deterministic generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes two indices into one stream id (level, sample) style.
pub fn stream_id(major: u64, minor: u64) -> u64 {
    major.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ minor
}

/// Fresh seed drawn from an existing generator.
pub fn child_seed<R: rand::Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.next_u64()
}
