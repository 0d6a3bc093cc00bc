//! Exact k-NN engines.
//!
//! Every engine returns the `min(k, N)` answers that are smallest under the
//! `(dist, id)` order, so equal distances resolve to the lower series id.
//! Pruning compares lower bounds against the current k-th best answer,
//! never the first.
//!
//! Each result carries counters: `real_dists` is the number of series for
//! which a distance computation was started (early-abandoned ones included)
//! and `lb_skips` the number ruled out by a lower bound alone, so the two
//! always add up to the dataset size.

mod disk;
mod exhaustive;
mod indexed;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use crate::distance::{bounded_distance, lb_keogh, DtwScratch};
use crate::error::{Error, Result};
use crate::query::{PreparedQuery, Threshold};

pub use disk::disk_search;
pub use exhaustive::{bruteforce_search, lb_bruteforce_search, LbSummaries};
pub use indexed::{parallel_search, serial_indexed_search};

/// One neighbor: a series id and its distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Answer {
    pub id: u32,
    pub dist: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub real_dists: u64,
    pub lb_skips: u64,
    /// Largest raw-data buffer held at once, disk engine only.
    pub peak_raw_bytes: u64,
}

impl SearchStats {
    fn add(&mut self, other: SearchStats) {
        self.real_dists += other.real_dists;
        self.lb_skips += other.lb_skips;
        self.peak_raw_bytes = self.peak_raw_bytes.max(other.peak_raw_bytes);
    }
}

/// Instrumentation for one query, collected only when requested.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    /// Successive pruning thresholds (k-th best distances), in update order.
    pub thresholds: Vec<f64>,
    /// Ids whose real distance was computed, in no particular order.
    pub refined: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub answers: Vec<Answer>,
    pub stats: SearchStats,
    pub trace: Option<Trace>,
}

/// Per-call search options shared by all engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub k: usize,
    /// Worker threads for engines that use them.
    pub threads: usize,
    /// Leaves refined before the pruned traversal starts in the indexed
    /// in-memory engines: the home leaf, then the best-bounded others.
    pub seed_leaves: usize,
    pub trace: bool,
}

impl SearchOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            threads: 1,
            seed_leaves: 1,
            trace: false,
        }
    }

    pub fn threads(self, threads: usize) -> Self {
        Self { threads, ..self }
    }

    pub fn seed_leaves(self, seed_leaves: usize) -> Self {
        Self { seed_leaves, ..self }
    }

    pub fn traced(self) -> Self {
        Self { trace: true, ..self }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        if self.threads == 0 {
            return Err(Error::param("thread count must be at least 1"));
        }
        if self.seed_leaves == 0 {
            return Err(Error::param("at least one seed leaf is required"));
        }
        Ok(())
    }
}

/// Engine names accepted by the CLI and the facade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EngineKind {
    Bruteforce,
    LbBruteforce,
    Serial,
    Parallel,
    Disk,
}

impl EngineKind {
    pub const ALL: [EngineKind; 5] = [
        EngineKind::Bruteforce,
        EngineKind::LbBruteforce,
        EngineKind::Serial,
        EngineKind::Parallel,
        EngineKind::Disk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Bruteforce => "bruteforce",
            EngineKind::LbBruteforce => "lb-bruteforce",
            EngineKind::Serial => "serial",
            EngineKind::Parallel => "parallel",
            EngineKind::Disk => "disk",
        }
    }

    pub fn uses_index(self) -> bool {
        matches!(self, EngineKind::Serial | EngineKind::Parallel | EngineKind::Disk)
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EngineKind::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                Error::param(format!(
                    "unknown engine {s:?}; expected bruteforce, lb-bruteforce, serial, parallel or disk"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    dist: f64,
    id: u32,
}

impl Entry {
    fn order(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.id.cmp(&other.id))
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.order(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order(other)
    }
}

/// The k best answers so far; the top is the worst kept answer.
#[derive(Debug, Clone)]
pub(crate) struct KnnHeap {
    k: usize,
    heap: BinaryHeap<Entry>,
}

impl KnnHeap {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.min(1 << 16) + 1),
        }
    }

    pub(crate) fn is_full(&self) -> bool {
        self.heap.len() >= self.k
    }

    pub(crate) fn threshold(&self) -> Threshold {
        match self.heap.peek() {
            Some(top) if self.is_full() => Threshold {
                dist: top.dist,
                id: top.id,
            },
            _ => Threshold::UNBOUNDED,
        }
    }

    /// Returns whether the answer was kept.
    pub(crate) fn push(&mut self, id: u32, dist: f64) -> bool {
        let entry = Entry { dist, id };
        if !self.is_full() {
            self.heap.push(entry);
            return true;
        }
        match self.heap.peek() {
            Some(top) if entry < *top => {
                self.heap.pop();
                self.heap.push(entry);
                true
            }
            _ => false,
        }
    }

    pub(crate) fn into_sorted(self) -> Vec<Answer> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|e| Answer {
                id: e.id,
                dist: e.dist,
            })
            .collect()
    }
}

/// Merges partial answer lists into the final `k` best, dropping repeats.
pub(crate) fn merge_answers(parts: impl IntoIterator<Item = Vec<Answer>>, k: usize) -> Vec<Answer> {
    let mut all: Vec<Answer> = parts.into_iter().flatten().collect();
    all.sort_by(|a, b| a.dist.total_cmp(&b.dist).then(a.id.cmp(&b.id)));
    all.dedup_by_key(|a| a.id);
    all.truncate(k);
    all
}

/// Lower-bound cascade and exact distance for one candidate at a time.
pub(crate) struct Refiner<'q> {
    query: &'q PreparedQuery,
    scratch: DtwScratch,
    pub(crate) real_dists: u64,
    pub(crate) refined: Option<Vec<u32>>,
}

impl<'q> Refiner<'q> {
    pub(crate) fn new(query: &'q PreparedQuery, trace: bool) -> Self {
        Self {
            query,
            scratch: DtwScratch::default(),
            real_dists: 0,
            refined: trace.then(Vec::new),
        }
    }

    /// Offers `series` to `heap` under `threshold`, which must be at least as
    /// strict as the heap's own. For DTW the LB_Keogh bound is tried first.
    /// Returns whether the heap changed.
    pub(crate) fn offer(&mut self, id: u32, series: &[f32], heap: &mut KnnHeap, threshold: Threshold) -> bool {
        if let Some(env) = &self.query.envelope {
            let lb = lb_keogh(env, series, threshold.dist);
            if !threshold.admits(lb, id) {
                return false;
            }
        }
        self.real_dists += 1;
        if let Some(refined) = self.refined.as_mut() {
            refined.push(id);
        }
        let d = bounded_distance(
            self.query.measure,
            &mut self.scratch,
            &self.query.values,
            series,
            threshold.dist,
        );
        threshold.admits(d, id) && heap.push(id, d)
    }
}

/// Appends the heap's threshold to the trace when it moved.
pub(crate) fn record_threshold(trace: &mut Option<Vec<f64>>, heap: &KnnHeap) {
    if let Some(t) = trace.as_mut() {
        if heap.is_full() {
            let d = heap.threshold().dist;
            if t.last() != Some(&d) {
                t.push(d);
            }
        }
    }
}

pub(crate) fn finish(
    answers: Vec<Answer>,
    real_dists: u64,
    count: usize,
    peak_raw_bytes: u64,
    thresholds: Option<Vec<f64>>,
    refined: Option<Vec<u32>>,
) -> QueryResult {
    QueryResult {
        answers,
        stats: SearchStats {
            real_dists,
            lb_skips: count as u64 - real_dists,
            peak_raw_bytes,
        },
        trace: thresholds.map(|thresholds| Trace {
            thresholds,
            refined: refined.unwrap_or_default(),
        }),
    }
}

/// Sums the counters of a batch of results.
pub fn total_stats(results: &[QueryResult]) -> SearchStats {
    let mut total = SearchStats::default();
    for r in results {
        total.add(r.stats);
    }
    total
}

pub(crate) fn build_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))
}
