//! Named, order-independent RNG streams derived from a single user seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Each stage draws from its own family of streams.
pub(crate) const STREAM_FIT: u64 = 0x6669_74;
pub(crate) const STREAM_PAIRS: u64 = 0x7061_6972;
pub(crate) const STREAM_GEN: u64 = 0x67_656e;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `seed` with a path of stream coordinates into a new 64-bit seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub(crate) fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}
