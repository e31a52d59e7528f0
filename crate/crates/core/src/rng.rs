//! Seeded random sources shared by initialization, synthesis and shuffling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand::Rng;

/// Deterministic generator used everywhere in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream from a base seed and a label (for example an
/// epoch index or a source index).
pub fn derive(seed: u64, stream: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// The seed [`derive`] would use, for APIs that take a plain `u64`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer keeps nearby (seed, stream) pairs decorrelated
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
