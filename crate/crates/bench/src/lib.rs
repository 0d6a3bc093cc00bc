//! Shared fixtures for the benchmarks.

use exaseries::synthetic::clustered;
use exaseries::{Dataset, IndexConfig, IsaxIndex};

/// Clustered dataset plus held-out queries drawn from the same bundles.
pub struct Fixture {
    pub dim: usize,
    pub data: Dataset,
    pub queries: Vec<f32>,
}

pub fn fixture(count: usize, dim: usize, queries: usize, seed: u64) -> Fixture {
    let mut all = clustered(count + queries, dim, 10, 0.5, seed);
    let queries = all.split_off(count * dim);
    Fixture {
        dim,
        data: Dataset::from_vec(all, dim, false).expect("generated data is valid"),
        queries,
    }
}

pub fn index(f: &Fixture, config: IndexConfig) -> IsaxIndex {
    exaseries::index::build_index(&f.data, config).expect("benchmark config is valid")
}
