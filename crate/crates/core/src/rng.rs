//! Seed derivation. Every random draw in the crate goes through a ChaCha
//! stream keyed by `(seed, stream)`, so blocks of work can be sampled
//! independently and reassembled in a fixed order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Samples drawn per parallel block.
pub const BLOCK: usize = 4096;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a seed with a label into a new seed (splitmix64 finalizer).
pub fn derive(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
