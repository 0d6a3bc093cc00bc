#![allow(dead_code)]

use std::path::Path;

use exaseries::{Answer, Dataset, DistanceKind, Engine, EngineKind, IndexConfig, LoadMode, SearchOptions};

/// Squared Euclidean distance, written independently of the library.
pub fn naive_l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

/// Banded DTW over a full `(n+1)²` table with squared cost.
pub fn naive_dtw(a: &[f32], b: &[f32], r: usize) -> f64 {
    let n = a.len();
    let mut t = vec![vec![f64::INFINITY; n + 1]; n + 1];
    t[0][0] = 0.0;
    for i in 1..=n {
        for j in 1..=n {
            if i.abs_diff(j) > r {
                continue;
            }
            let c = (a[i - 1] as f64 - b[j - 1] as f64).powi(2);
            t[i][j] = c + t[i - 1][j - 1].min(t[i - 1][j]).min(t[i][j - 1]);
        }
    }
    t[n][n]
}

/// Double-loop k-NN with a full sort, the reference for exactness.
pub fn naive_knn(data: &[f32], dim: usize, q: &[f32], k: usize, m: DistanceKind) -> Vec<Answer> {
    let mut all: Vec<Answer> = data
        .chunks_exact(dim)
        .enumerate()
        .map(|(id, s)| Answer {
            id: id as u32,
            dist: match m {
                DistanceKind::L2Squared => naive_l2(q, s),
                DistanceKind::Dtw { radius } => naive_dtw(q, s, radius),
            },
        })
        .collect();
    all.sort_by(|a, b| a.dist.partial_cmp(&b.dist).unwrap().then(a.id.cmp(&b.id)));
    all.truncate(k);
    all
}

pub fn same_answers(expected: &[Answer], actual: &[Answer]) -> Result<(), String> {
    if expected.len() != actual.len() {
        return Err(format!("expected {} answers, got {}", expected.len(), actual.len()));
    }
    for (rank, (e, a)) in expected.iter().zip(actual).enumerate() {
        if e.id != a.id {
            return Err(format!("rank {rank}: expected id {} ({}), got {} ({})", e.id, e.dist, a.id, a.dist));
        }
        let tol = 1e-3 * e.dist.abs().max(a.dist.abs());
        if (e.dist - a.dist).abs() > tol {
            return Err(format!("rank {rank}: expected distance {}, got {}", e.dist, a.dist));
        }
    }
    Ok(())
}

/// Every engine over one dataset, the disk engine reading from `path`.
pub fn all_engines(values: &[f32], dim: usize, path: &Path, config: &IndexConfig) -> Vec<Engine> {
    exaseries::data::write_dataset(path, values).unwrap();
    let memory = Dataset::from_vec(values.to_vec(), dim, false).unwrap();
    let file = Dataset::load(path, dim, LoadMode::FileBacked, false).unwrap();
    EngineKind::ALL
        .into_iter()
        .map(|kind| {
            let data = if kind == EngineKind::Disk { &file } else { &memory };
            Engine::build(kind, data, config.clone()).unwrap()
        })
        .collect()
}

pub fn opts(k: usize, engine: EngineKind, threads: usize) -> SearchOptions {
    let threads = if engine == EngineKind::Parallel { threads } else { 1 };
    SearchOptions::new(k).threads(threads)
}
