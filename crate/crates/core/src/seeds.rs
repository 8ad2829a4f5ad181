//! Counter-based seed derivation and RNG construction.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` keyed by a seed
//! derived from the master seed, a stage tag and an index, so results do not
//! depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Real;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(stage, index)` under `master`.
pub fn derive_seed(master: u64, stage: &str, index: u64) -> u64 {
    let mut h = splitmix64(master);
    for b in stage.bytes() {
        h = splitmix64(h ^ b as u64);
    }
    splitmix64(h ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(master: u64, stage: &str, index: u64) -> Rng {
    rng(derive_seed(master, stage, index))
}

/// Standard Gaussian vector of length `n`. Draws are made in `f64` so that
/// every scalar type sees the same sample path.
pub fn gaussian_vec<T: Real>(rng: &mut Rng, n: usize) -> Vec<T> {
    (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            T::lit(v)
        })
        .collect()
}

/// Uniform point on the unit sphere in `R^n` (normalized Gaussian).
pub fn sphere_vec<T: Real>(rng: &mut Rng, n: usize) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.iter().map(|x| T::lit(x / norm)).collect();
        }
    }
}
