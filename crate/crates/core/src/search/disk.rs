//! Search over an index whose raw series stay on disk.
//!
//! Pruning runs on the in-memory words. Series that survive are read in
//! ascending file-offset order, in batches whose buffer never exceeds the
//! configured byte budget (one series minimum), with adjacent ids coalesced
//! into a single positioned read. Bounds are re-checked against the current
//! k-th best right before each batch is read.

use super::{finish, record_threshold, KnnHeap, QueryResult, Refiner, SearchOptions};
use crate::data::{rows_of, READ_DECODE_BYTES, VALUE_BYTES};
use crate::distance::DistanceKind;
use crate::error::{Error, Result};
use crate::index::{IsaxIndex, NodeId, NodeKind, RawStorage};
use crate::query::PreparedQuery;

/// Disk-resident search. The backing file is verified (length and checksum)
/// before the first query runs; a changed file fails the whole call.
pub fn disk_search(
    index: &IsaxIndex,
    queries: &[f32],
    measure: DistanceKind,
    opts: SearchOptions,
) -> Result<Vec<QueryResult>> {
    opts.validate()?;
    if index.config().storage != RawStorage::OnDisk {
        return Err(Error::param("the disk engine needs an index built with disk storage"));
    }
    rows_of(queries, index.dim())?;
    index.raw().verify_backing_file()?;
    queries
        .chunks_exact(index.dim())
        .map(|q| {
            let q = index.prepare_query(q, measure)?;
            disk_query(index, &q, opts)
        })
        .collect()
}

struct Batcher<'a> {
    index: &'a IsaxIndex,
    rows_per_batch: usize,
    buf: Vec<f32>,
    peak_bytes: u64,
}

impl Batcher<'_> {
    /// Refines `(id, lower bound)` pairs sorted by id.
    fn refine(
        &mut self,
        entries: &[(u32, f64)],
        heap: &mut KnnHeap,
        refiner: &mut Refiner<'_>,
        thresholds: &mut Option<Vec<f64>>,
    ) -> Result<()> {
        let dim = self.index.dim();
        let mut rest = entries;
        while !rest.is_empty() {
            let t = heap.threshold();
            let mut batch: Vec<u32> = Vec::with_capacity(self.rows_per_batch);
            let mut used = 0;
            for &(id, lb) in rest {
                if batch.len() == self.rows_per_batch {
                    break;
                }
                used += 1;
                if t.admits(lb, id) {
                    batch.push(id);
                }
            }
            rest = &rest[used..];
            if batch.is_empty() {
                continue;
            }
            self.buf.resize(batch.len() * dim, 0.0);
            let mut largest_run = 0;
            let mut start = 0;
            while start < batch.len() {
                let mut end = start + 1;
                while end < batch.len() && batch[end] == batch[end - 1] + 1 {
                    end += 1;
                }
                self.index
                    .raw()
                    .read_rows(batch[start] as usize, &mut self.buf[start * dim..end * dim])?;
                largest_run = largest_run.max(end - start);
                start = end;
            }
            // plus the bounded byte buffer the positioned read decodes through
            let resident = batch.len() * dim * VALUE_BYTES + (largest_run * dim * VALUE_BYTES).min(READ_DECODE_BYTES);
            self.peak_bytes = self.peak_bytes.max(resident as u64);
            for (&id, series) in batch.iter().zip(self.buf.chunks_exact(dim)) {
                let t = heap.threshold();
                if refiner.offer(id, series, heap, t) {
                    record_threshold(thresholds, heap);
                }
            }
        }
        Ok(())
    }
}

fn leaf_entries(index: &IsaxIndex, q: &PreparedQuery, node: NodeId, heap: &KnnHeap, out: &mut Vec<(u32, f64)>) {
    let NodeKind::Leaf(leaf) = &index.node(node).kind else {
        return;
    };
    let (w, bits) = (index.config().segments, index.config().max_bits);
    let t = heap.threshold();
    for (&id, word) in leaf.ids.iter().zip(leaf.words.chunks_exact(w)) {
        let lb = q.bound_for_word(word, bits);
        if t.admits(lb, id) {
            out.push((id, lb));
        }
    }
}

fn disk_query(index: &IsaxIndex, q: &PreparedQuery, opts: SearchOptions) -> Result<QueryResult> {
    let row_bytes = index.dim() * VALUE_BYTES;
    let mut batcher = Batcher {
        index,
        rows_per_batch: (index.config().disk_batch_bytes / row_bytes).max(1),
        buf: Vec::new(),
        peak_bytes: 0,
    };
    let mut heap = KnnHeap::new(opts.k);
    let mut refiner = Refiner::new(q, opts.trace);
    let mut thresholds = opts.trace.then(Vec::new);

    let home = index.home_leaf(q);
    let mut entries = Vec::new();
    if let Some(home) = home {
        leaf_entries(index, q, home, &heap, &mut entries);
        entries.sort_unstable_by_key(|e| e.0);
        batcher.refine(&entries, &mut heap, &mut refiner, &mut thresholds)?;
    }

    entries.clear();
    for c in index.leaf_candidates(q, heap.threshold()) {
        if Some(c.node) != home {
            leaf_entries(index, q, c.node, &heap, &mut entries);
        }
    }
    // ids are file positions, so id order is file-offset order
    entries.sort_unstable_by_key(|e| e.0);
    batcher.refine(&entries, &mut heap, &mut refiner, &mut thresholds)?;

    let real = refiner.real_dists;
    Ok(finish(
        heap.into_sorted(),
        real,
        index.len(),
        batcher.peak_bytes,
        thresholds,
        refiner.refined,
    ))
}
