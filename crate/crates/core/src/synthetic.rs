//! Seeded synthetic workloads for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::normalize_rows;

/// `count` z-normalized Gaussian random walks of length `n`, row-major.
pub fn random_walks(count: usize, n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count * n);
    for _ in 0..count {
        let mut x = 0.0f64;
        for _ in 0..n {
            let step: f64 = StandardNormal.sample(&mut rng);
            x += step;
            out.push(x as f32);
        }
    }
    normalize_rows(&mut out, n);
    out
}

/// Series drawn around `clusters` random-walk centers with i.i.d. Gaussian
/// noise of standard deviation `noise`. Cluster membership is random per row.
pub fn clustered(count: usize, n: usize, clusters: usize, noise: f64, seed: u64) -> Vec<f32> {
    let centers = random_walks(clusters.max(1), n, seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise).expect("noise must be finite and non-negative");
    let mut out = Vec::with_capacity(count * n);
    for _ in 0..count {
        let c = rng.random_range(0..clusters.max(1));
        for &v in &centers[c * n..(c + 1) * n] {
            out.push((v as f64 + jitter.sample(&mut rng)) as f32);
        }
    }
    out
}

/// Random walks where `copies` randomly chosen rows are overwritten with
/// row 0, giving exact duplicates scattered through the id space.
pub fn with_duplicates(count: usize, n: usize, copies: usize, seed: u64) -> Vec<f32> {
    let mut values = random_walks(count, n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let source = values[..n].to_vec();
    for _ in 0..copies.min(count) {
        let id = rng.random_range(0..count);
        values[id * n..(id + 1) * n].copy_from_slice(&source);
    }
    values
}
