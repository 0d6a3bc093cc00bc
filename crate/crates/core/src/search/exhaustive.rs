use rayon::prelude::*;

use super::{finish, merge_answers, record_threshold, KnnHeap, QueryResult, Refiner, SearchOptions};
use crate::data::{check_series, rows_of, z_normalize_into, Dataset};
use crate::distance::{bounded_distance, DistanceKind, DtwScratch};
use crate::error::{Error, Result};
use crate::index::compute_words;
use crate::query::PreparedQuery;
use crate::summary::MAX_BITS;

const CHUNK_ROWS: usize = 1024;

/// Exhaustive scan computing every distance, early-abandoned against the
/// running k-th best. Queries are normalized iff `data` is.
///
/// With more than one thread the dataset is split into chunks scanned
/// concurrently, each with its own heap, and the partial answers merged.
pub fn bruteforce_search(
    data: &Dataset,
    queries: &[f32],
    measure: DistanceKind,
    opts: SearchOptions,
) -> Result<Vec<QueryResult>> {
    opts.validate()?;
    measure.validate(data.dim())?;
    let dim = data.dim();
    let rows = rows_of(queries, dim)?;
    let pool = (opts.threads > 1 && !opts.trace)
        .then(|| super::build_pool(opts.threads))
        .transpose()?;
    let mut out = Vec::with_capacity(rows);
    for q in queries.chunks_exact(dim) {
        let q = prepare_values(q, dim, data.is_normalized())?;
        let chunks = data.len().div_ceil(CHUNK_ROWS);
        let result = match &pool {
            Some(pool) => {
                let parts = pool.install(|| {
                    (0..chunks)
                        .into_par_iter()
                        .map(|c| {
                            let mut heap = KnnHeap::new(opts.k);
                            scan_chunk(data, c, &q, measure, &mut heap, &mut None)?;
                            Ok(heap.into_sorted())
                        })
                        .collect::<Result<Vec<_>>>()
                })?;
                finish(merge_answers(parts, opts.k), data.len() as u64, data.len(), 0, None, None)
            }
            None => {
                let mut heap = KnnHeap::new(opts.k);
                let mut thresholds = opts.trace.then(Vec::new);
                for c in 0..chunks {
                    scan_chunk(data, c, &q, measure, &mut heap, &mut thresholds)?;
                }
                let refined = opts.trace.then(|| (0..data.len() as u32).collect());
                finish(heap.into_sorted(), data.len() as u64, data.len(), 0, thresholds, refined)
            }
        };
        out.push(result);
    }
    Ok(out)
}

fn scan_chunk(
    data: &Dataset,
    chunk: usize,
    q: &[f32],
    measure: DistanceKind,
    heap: &mut KnnHeap,
    thresholds: &mut Option<Vec<f64>>,
) -> Result<()> {
    let dim = data.dim();
    let first = chunk * CHUNK_ROWS;
    let rows = CHUNK_ROWS.min(data.len() - first);
    let owned;
    let block = match data.as_slice() {
        Some(all) => &all[first * dim..(first + rows) * dim],
        None => {
            let mut buf = vec![0.0; rows * dim];
            data.read_rows(first, &mut buf)?;
            owned = buf;
            &owned[..]
        }
    };
    let mut scratch = DtwScratch::default();
    for (i, s) in block.chunks_exact(dim).enumerate() {
        let id = (first + i) as u32;
        let t = heap.threshold();
        let d = bounded_distance(measure, &mut scratch, q, s, t.dist);
        if t.admits(d, id) && heap.push(id, d) {
            record_threshold(thresholds, heap);
        }
    }
    Ok(())
}

fn prepare_values(q: &[f32], dim: usize, normalize: bool) -> Result<Vec<f32>> {
    check_series(q, dim)?;
    let mut values = q.to_vec();
    if normalize {
        z_normalize_into(q, &mut values);
    }
    Ok(values)
}

/// Per-series iSAX words used by the lower-bounding scan.
#[derive(Debug, Clone, PartialEq)]
pub struct LbSummaries {
    segments: usize,
    words: Vec<u8>,
}

impl LbSummaries {
    /// Full-cardinality words of every series in `data`.
    pub fn new(data: &Dataset, segments: usize) -> Result<Self> {
        if segments == 0 || segments > data.dim() {
            return Err(Error::param(format!(
                "segments must be in 1..={}, got {segments}",
                data.dim()
            )));
        }
        Ok(Self {
            segments,
            words: compute_words(data, segments, MAX_BITS)?,
        })
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn len(&self) -> usize {
        self.words.len() / self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    fn word(&self, id: usize) -> &[u8] {
        &self.words[id * self.segments..(id + 1) * self.segments]
    }
}

/// Sequential scan in id order that skips a series when the lower bound of
/// its word (and for DTW, then LB_Keogh) is not admitted by the k-th best.
pub fn lb_bruteforce_search(
    data: &Dataset,
    summaries: &LbSummaries,
    queries: &[f32],
    measure: DistanceKind,
    opts: SearchOptions,
) -> Result<Vec<QueryResult>> {
    opts.validate()?;
    if summaries.len() != data.len() {
        return Err(Error::param(format!(
            "summaries cover {} series, dataset has {}",
            summaries.len(),
            data.len()
        )));
    }
    let dim = data.dim();
    rows_of(queries, dim)?;
    let mut out = Vec::new();
    for q in queries.chunks_exact(dim) {
        let q = PreparedQuery::new(q, dim, summaries.segments, MAX_BITS, measure, data.is_normalized())?;
        let mut heap = KnnHeap::new(opts.k);
        let mut refiner = Refiner::new(&q, opts.trace);
        let mut thresholds = opts.trace.then(Vec::new);
        let mut buf = Vec::new();
        for chunk in 0..data.len().div_ceil(CHUNK_ROWS) {
            let first = chunk * CHUNK_ROWS;
            let rows = CHUNK_ROWS.min(data.len() - first);
            let block = match data.as_slice() {
                Some(all) => &all[first * dim..(first + rows) * dim],
                None => {
                    buf.resize(rows * dim, 0.0);
                    data.read_rows(first, &mut buf)?;
                    &buf[..]
                }
            };
            for (i, s) in block.chunks_exact(dim).enumerate() {
                let id = first + i;
                let t = heap.threshold();
                if !t.admits(q.bound_for_word(summaries.word(id), MAX_BITS), id as u32) {
                    continue;
                }
                if refiner.offer(id as u32, s, &mut heap, t) {
                    record_threshold(&mut thresholds, &heap);
                }
            }
        }
        let real = refiner.real_dists;
        out.push(finish(heap.into_sorted(), real, data.len(), 0, thresholds, refiner.refined));
    }
    Ok(out)
}
