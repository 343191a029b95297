//! Seeded random streams. Every consumer draws from a ChaCha8 stream picked
//! by `(seed, stream)`, so results never depend on scheduling.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `count` standard normal draws from stream `(seed, stream)`.
pub fn standard_normals(seed: u64, stream: u64, count: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    (0..count)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Derives an independent seed from a base seed, a purpose tag and an index
/// (splitmix64 finaliser).
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut z =
        base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
