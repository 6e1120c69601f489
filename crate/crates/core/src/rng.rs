//! Pinned, portable randomness.
//!
//! Every random draw in the crate comes from ChaCha8 (a counter-based stream
//! cipher generator) keyed by a 64-bit seed and a 64-bit stream id. Seeds for
//! sub-tasks are derived with SplitMix64 finalisation, which is stable across
//! platforms and releases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Real;

pub type SscRng = ChaCha8Rng;

/// Name of the generator recorded in run metadata.
pub const RNG_NAME: &str = "ChaCha8Rng(seed_from_u64, set_stream)";
/// Name of the seed-derivation hash recorded in run metadata.
pub const SEED_HASH_NAME: &str = "splitmix64-chain";

/// Generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> SscRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable hash of a master seed and a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &x| splitmix64(acc ^ splitmix64(x)))
}

#[inline]
pub fn normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::of(rng.sample::<f64, _>(StandardNormal))
}

/// Fills a vector with i.i.d. standard normals.
pub fn normals<T: Real, R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<T> {
    (0..len).map(|_| normal(rng)).collect()
}

#[inline]
pub fn sign<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    if rng.random::<bool>() {
        T::one()
    } else {
        -T::one()
    }
}
