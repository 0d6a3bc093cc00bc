//! Index-guided engines: a single-threaded one and a multi-worker one that
//! share the same per-worker refinement loop.
//!
//! Both seed the answer set from the query's home leaf (optionally plus the
//! next best-bounded leaves), then visit the remaining leaves in ascending
//! `(lower bound, node id)` order and stop at the first leaf whose bound
//! exceeds the k-th best distance.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{build_pool, finish, merge_answers, record_threshold, KnnHeap, QueryResult, Refiner, SearchOptions};
use crate::data::rows_of;
use crate::distance::DistanceKind;
use crate::error::Result;
use crate::index::{IsaxIndex, LeafCandidate, NodeId, NodeKind};
use crate::query::{PreparedQuery, Threshold};

/// Single-threaded index search.
pub fn serial_indexed_search(
    index: &IsaxIndex,
    queries: &[f32],
    measure: DistanceKind,
    opts: SearchOptions,
) -> Result<Vec<QueryResult>> {
    opts.validate()?;
    rows_of(queries, index.dim())?;
    queries
        .chunks_exact(index.dim())
        .map(|q| {
            let q = index.prepare_query(q, measure)?;
            indexed_query(index, &q, opts, None)
        })
        .collect()
}

/// Multi-worker index search, one query at a time on `opts.threads` workers.
///
/// Workers pull leaves from one shared cursor over the ordered candidate
/// list, keep private heaps seeded with the answers of the seed leaves, and publish
/// their k-th best distance to a shared atomic threshold that only
/// decreases. Answers equal the serial engine's for every worker count.
pub fn parallel_search(
    index: &IsaxIndex,
    queries: &[f32],
    measure: DistanceKind,
    opts: SearchOptions,
) -> Result<Vec<QueryResult>> {
    opts.validate()?;
    rows_of(queries, index.dim())?;
    let pool = build_pool(opts.threads)?;
    queries
        .chunks_exact(index.dim())
        .map(|q| {
            let q = index.prepare_query(q, measure)?;
            indexed_query(index, &q, opts, Some(&pool))
        })
        .collect()
}

/// Shared, monotonically non-increasing k-th best distance.
struct SharedBsf {
    bits: AtomicU64,
    trace: Option<Mutex<Vec<f64>>>,
}

impl SharedBsf {
    fn new(initial: f64, trace: bool) -> Self {
        Self {
            bits: AtomicU64::new(initial.to_bits()),
            trace: trace.then(|| Mutex::new(if initial.is_finite() { vec![initial] } else { Vec::new() })),
        }
    }

    /// Non-negative floats order like their bit patterns, so `fetch_min` on
    /// the bits is a monotone decrease.
    fn publish(&self, dist: f64) {
        match &self.trace {
            None => {
                self.bits.fetch_min(dist.to_bits(), Ordering::AcqRel);
            }
            Some(log) => {
                let mut log = log.lock().expect("trace lock poisoned");
                let prev = self.bits.fetch_min(dist.to_bits(), Ordering::AcqRel);
                if dist.to_bits() < prev {
                    log.push(dist);
                }
            }
        }
    }

    /// Admits lower bounds up to and including the shared distance; ties at
    /// that distance are left to the worker's own heap.
    fn threshold(&self) -> Threshold {
        Threshold {
            dist: f64::from_bits(self.bits.load(Ordering::Acquire)),
            id: u32::MAX,
        }
    }
}

struct WorkerOutput {
    answers: Vec<super::Answer>,
    real_dists: u64,
    thresholds: Option<Vec<f64>>,
    refined: Option<Vec<u32>>,
}

fn indexed_query(
    index: &IsaxIndex,
    q: &PreparedQuery,
    opts: SearchOptions,
    pool: Option<&rayon::ThreadPool>,
) -> Result<QueryResult> {
    let mut seed = KnnHeap::new(opts.k);
    let mut refiner = Refiner::new(q, opts.trace);
    let mut thresholds = opts.trace.then(Vec::new);
    let home = index.home_leaf(q);
    if let Some(home) = home {
        refine_leaf(index, q, home, &mut seed, &mut refiner, None, &mut thresholds)?;
    }

    let mut candidates: Vec<LeafCandidate> = index
        .leaf_candidates(q, seed.threshold())
        .into_iter()
        .filter(|c| Some(c.node) != home)
        .collect();
    candidates.sort_by(|a, b| a.lower_bound.total_cmp(&b.lower_bound).then(a.node.cmp(&b.node)));
    let extra_seeds = (opts.seed_leaves - 1).min(candidates.len());
    for c in &candidates[..extra_seeds] {
        refine_leaf(index, q, c.node, &mut seed, &mut refiner, None, &mut thresholds)?;
    }
    let cursor = AtomicUsize::new(extra_seeds);

    let outputs: Vec<Result<WorkerOutput>> = match pool {
        None => {
            let mut heap = seed.clone();
            let res = worker_loop(index, q, &candidates, &cursor, &mut heap, &mut refiner, None, &mut thresholds);
            let out = res.map(|()| WorkerOutput {
                answers: heap.into_sorted(),
                real_dists: refiner.real_dists,
                thresholds: thresholds.take(),
                refined: refiner.refined.take(),
            });
            vec![out]
        }
        Some(pool) => {
            let seed_dist = seed.threshold().dist;
            let shared = SharedBsf::new(seed_dist, opts.trace);
            let mut outs = pool.broadcast(|_| {
                let mut heap = seed.clone();
                let mut local = Refiner::new(q, opts.trace);
                let mut unused = None;
                worker_loop(index, q, &candidates, &cursor, &mut heap, &mut local, Some(&shared), &mut unused)
                    .map(|()| WorkerOutput {
                        answers: heap.into_sorted(),
                        real_dists: local.real_dists,
                        thresholds: None,
                        refined: local.refined,
                    })
            });
            // the seeding phase ran on this thread; fold its work into the output
            let merged_log = shared.trace.map(|log| {
                let mut all = thresholds.take().unwrap_or_default();
                for d in log.into_inner().expect("trace lock poisoned") {
                    if all.last().is_none_or(|&last| d < last) {
                        all.push(d);
                    }
                }
                all
            });
            outs.push(Ok(WorkerOutput {
                answers: seed.into_sorted(),
                real_dists: refiner.real_dists,
                thresholds: merged_log,
                refined: refiner.refined.take(),
            }));
            outs
        }
    };

    let mut parts = Vec::with_capacity(outputs.len());
    let mut real = 0;
    let mut trace_thresholds = None;
    let mut refined: Option<Vec<u32>> = None;
    for out in outputs {
        let out = out?;
        parts.push(out.answers);
        real += out.real_dists;
        if out.thresholds.is_some() {
            trace_thresholds = out.thresholds;
        }
        if let Some(r) = out.refined {
            refined.get_or_insert_with(Vec::new).extend(r);
        }
    }
    let answers = merge_answers(parts, opts.k);
    if opts.trace && trace_thresholds.is_none() {
        trace_thresholds = Some(Vec::new());
    }
    Ok(finish(answers, real, index.len(), 0, trace_thresholds, refined))
}

#[allow(clippy::too_many_arguments)]
fn worker_loop(
    index: &IsaxIndex,
    q: &PreparedQuery,
    candidates: &[LeafCandidate],
    cursor: &AtomicUsize,
    heap: &mut KnnHeap,
    refiner: &mut Refiner<'_>,
    shared: Option<&SharedBsf>,
    thresholds: &mut Option<Vec<f64>>,
) -> Result<()> {
    loop {
        let i = cursor.fetch_add(1, Ordering::Relaxed);
        let Some(c) = candidates.get(i) else {
            return Ok(());
        };
        let t = effective(heap, shared);
        // candidates are sorted, so every later bound is at least this large
        if c.lower_bound > t.dist {
            return Ok(());
        }
        if !t.admits(c.lower_bound, index.node(c.node).min_id) {
            continue;
        }
        refine_leaf(index, q, c.node, heap, refiner, shared, thresholds)?;
    }
}

fn effective(heap: &KnnHeap, shared: Option<&SharedBsf>) -> Threshold {
    match shared {
        Some(s) => heap.threshold().tighter(s.threshold()),
        None => heap.threshold(),
    }
}

fn refine_leaf(
    index: &IsaxIndex,
    q: &PreparedQuery,
    node: NodeId,
    heap: &mut KnnHeap,
    refiner: &mut Refiner<'_>,
    shared: Option<&SharedBsf>,
    thresholds: &mut Option<Vec<f64>>,
) -> Result<()> {
    let NodeKind::Leaf(leaf) = &index.node(node).kind else {
        return Ok(());
    };
    let w = index.config().segments;
    let bits = index.config().max_bits;
    let raw = index.raw();
    for (&id, word) in leaf.ids.iter().zip(leaf.words.chunks_exact(w)) {
        let t = effective(heap, shared);
        if !t.admits(q.bound_for_word(word, bits), id) {
            continue;
        }
        let series = raw.get_series(id as usize)?;
        if refiner.offer(id, &series, heap, t) {
            record_threshold(thresholds, heap);
            if let (Some(s), true) = (shared, heap.is_full()) {
                s.publish(heap.threshold().dist);
            }
        }
    }
    Ok(())
}
