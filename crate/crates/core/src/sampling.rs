//! Seeded random sampling helpers.
//!
//! Every stochastic routine in the crate takes an explicit `u64` seed. When
//! work is split into independent streams (shards, restarts, sweep members)
//! stream `k` of seed `s` uses `derive_seed(s, k)`, a SplitMix64 finalizer
//! applied to `s ^ (k * 0x9E3779B97F4A7C15)`. The rule is stable across
//! releases so that reports stay reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type SeededRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    rng(derive_seed(seed, stream))
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform direction on the Euclidean unit sphere.
pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v = normal_vec(rng, dim);
        let n = norm2(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Isotropic heavy-tailed mixture: a standard normal with probability 1/2,
/// otherwise a normal of scale 100.
pub fn heavy_mixture<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    let scale = if rng.random::<bool>() { 1.0 } else { 100.0 };
    normal_vec(rng, dim).into_iter().map(|x| x * scale).collect()
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}
