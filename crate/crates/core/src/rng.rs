//! Seeded random streams.
//!
//! Every consumer derives its generator from a `(seed, stream)` pair, so a
//! batch drawn in parallel is identical to one drawn sequentially.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream reserved for solver-internal randomness (REK index draws).
pub const SOLVER_STREAM: u64 = u64::MAX;

/// Generator for stream `stream` of the family identified by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a label into a seed, used to give independent experiments
/// independent families.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
