//! Acceptance suite. Runs every primary criterion in sequence, prints one
//! `PASS`/`FAIL` line per criterion and exits non-zero if any failed.
//!
//! Run with `cargo test -p exaseries --test acceptance`.

mod common;

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::same_answers;
use exaseries::answers::{format_answers, Workload};
use exaseries::distance::{build_envelope, dtw, l2_squared, lb_dtw};
use exaseries::index::build_index;
use exaseries::search::{
    bruteforce_search, lb_bruteforce_search, parallel_search, serial_indexed_search, total_stats, LbSummaries,
};
use exaseries::summary::{isax_word, mindist_dtw, mindist_paa_isax, paa, EnvelopeSegments};
use exaseries::synthetic::{clustered, random_walks, with_duplicates};
use exaseries::{
    select_engine, Dataset, DistanceKind, Engine, EngineKind, EnvironmentProfile, IndexConfig, IsaxIndex, LoadMode,
    QueryResult, RawStorage, Recommendation, SearchOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

static AUDITED: AtomicUsize = AtomicUsize::new(0);

fn audit(index: &IsaxIndex) -> Result<(), String> {
    index.audit().map_err(|e| format!("audit failed: {e}"))?;
    AUDITED.fetch_add(1, Ordering::Relaxed);
    Ok(())
}

fn answers_file(results: &[QueryResult], workload: &Workload) -> String {
    format_answers(workload, results.iter().map(|r| &r.answers[..]))
}

fn workload(queries: usize, k: usize, dim: usize, measure: DistanceKind) -> Workload {
    Workload {
        queries,
        k,
        dim,
        measure,
        normalize: false,
    }
}

/// Queries half drawn fresh, half as lightly perturbed dataset members.
fn mixed_queries(data: &[f32], dim: usize, count: usize, seed: u64) -> Vec<f32> {
    let n = data.len() / dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = random_walks(count / 2, dim, seed);
    for _ in count / 2..count {
        let id = rng.random_range(0..n);
        out.extend(data[id * dim..(id + 1) * dim].iter().map(|&v| v + rng.random_range(-0.05..0.05)));
    }
    out
}

fn exactness() -> Outcome {
    const NS: [usize; 3] = [100, 1000, 10_000];
    const DIMS: [usize; 3] = [16, 64, 256];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = 0usize;
    for i in 0..20usize {
        let (count, dim) = (NS[i % 3], DIMS[(i / 3) % 3]);
        let seed = 1000 + i as u64;
        let data = match i % 3 {
            0 => random_walks(count, dim, seed),
            1 => clustered(count, dim, 5, 0.4, seed),
            _ => with_duplicates(count, dim, count / 10, seed),
        };
        let mut queries = mixed_queries(&data, dim, 19, seed + 7);
        queries.extend_from_slice(&data[..dim]);
        let path = dir.path().join(format!("exact{i}.bin"));
        for measure in [DistanceKind::L2Squared, DistanceKind::dtw_default(dim)] {
            let config = IndexConfig {
                segments: if dim == 16 { 8 } else { 16 },
                max_bits: [8, 4][i % 2],
                leaf_capacity: [8, 64, 500][(i / 2) % 3],
                distance: measure,
                ..IndexConfig::default()
            };
            let engines = common::all_engines(&data, dim, &path, &config);
            for e in &engines {
                if let Some(index) = e.index() {
                    audit(index)?;
                }
            }
            let oracle = &engines[0];
            assert_eq!(oracle.kind(), EngineKind::Bruteforce);
            let truth = oracle.search(&queries, SearchOptions::new(100)).map_err(|e| e.to_string())?;
            for k in [1, 10, 100] {
                for e in &engines {
                    let res = e.search(&queries, common::opts(k, e.kind(), 4)).map_err(|e| e.to_string())?;
                    for (qi, (t, r)) in truth.iter().zip(&res).enumerate() {
                        let expected = &t.answers[..k.min(count)];
                        same_answers(expected, &r.answers).map_err(|m| {
                            format!("dataset {i} (N={count}, n={dim}) {measure} k={k} {} query {qi}: {m}", e.kind())
                        })?;
                        checked += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{checked} answer sets equal the exhaustive oracle"))
}

fn lb_soundness() -> Outcome {
    let (n, w, pairs) = (64, 8, 100_000);
    let radius = exaseries::distance::default_dtw_radius(n);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let pool_q = random_walks(1000, n, 78);
    let pool_s = random_walks(1000, n, 79);
    let mut violations = [0usize; 3];
    for p in 0..pairs {
        let q = &pool_q[(p % 1000) * n..(p % 1000 + 1) * n];
        let s_id = rng.random_range(0..1000);
        let mut s = pool_s[s_id * n..(s_id + 1) * n].to_vec();
        if p % 4 == 0 {
            // near neighbors exercise the tight end of the bounds
            for (v, &x) in s.iter_mut().zip(q) {
                *v = x + rng.random_range(-0.1..0.1);
            }
        }
        let bits: Vec<u8> = (0..w).map(|_| rng.random_range(1..=8)).collect();
        let paa_q = paa(q, w).unwrap();
        let word = isax_word(&paa(&s, w).unwrap(), &bits).unwrap();
        let l2 = l2_squared(q, &s).unwrap();
        let d = dtw(q, &s, radius).unwrap();
        let env = build_envelope(q, radius);
        let segs = EnvelopeSegments::new(&env, w).unwrap();
        if mindist_paa_isax(&paa_q, &word, n).unwrap() > l2 {
            violations[0] += 1;
        }
        if lb_dtw(&env, &s).unwrap() > d {
            violations[1] += 1;
        }
        if mindist_dtw(&segs, &word, n).unwrap() > d {
            violations[2] += 1;
        }
    }
    if violations != [0; 3] {
        return Err(format!(
            "violations: mindist_paa_isax {}, lb_dtw {}, mindist_dtw {}",
            violations[0], violations[1], violations[2]
        ));
    }
    Ok(format!("{pairs} pairs, zero violations for all three bounds"))
}

fn parallel_determinism() -> Outcome {
    let dim = 64;
    let workloads = [
        ("clustered", clustered(20_000, dim, 10, 0.3, 5), 10, DistanceKind::L2Squared),
        ("tie-stress", with_duplicates(5_000, dim, 300, 6), 100, DistanceKind::L2Squared),
        ("tie-stress dtw", with_duplicates(5_000, dim, 300, 6), 50, DistanceKind::dtw_default(dim)),
    ];
    let mut summary = Vec::new();
    for (name, data, k, measure) in workloads {
        let dups = data.chunks_exact(dim).filter(|r| *r == &data[..dim]).count();
        if name.starts_with("tie") && dups < 100 {
            return Err(format!("tie-stress set has only {dups} duplicates"));
        }
        let mut queries = mixed_queries(&data, dim, 48, 9);
        queries.extend_from_slice(&data[..dim]);
        queries.extend_from_slice(&data[..dim]);
        let ds = Dataset::from_vec(data, dim, false).map_err(|e| e.to_string())?;
        let config = IndexConfig {
            leaf_capacity: 100,
            distance: measure,
            ..IndexConfig::default()
        };
        let index = build_index(&ds, config).map_err(|e| e.to_string())?;
        audit(&index)?;
        let wl = workload(50, k, dim, measure);
        let mut files = Vec::new();
        for workers in [1, 2, 4, 8] {
            let res = parallel_search(&index, &queries, measure, SearchOptions::new(k).threads(workers))
                .map_err(|e| e.to_string())?;
            files.push(answers_file(&res, &wl));
        }
        if let Some(pos) = files.iter().position(|f| f != &files[0]) {
            return Err(format!("{name}: answers with {} workers differ from 1 worker", [1, 2, 4, 8][pos]));
        }
        summary.push(if name.starts_with("tie") {
            format!("{name} ({dups} copies of series 0)")
        } else {
            name.to_string()
        });
    }
    Ok(format!("identical answer files for 1/2/4/8 workers on {}", summary.join(", ")))
}

fn disk_memory_equivalence() -> Outcome {
    let dim = 128;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("equiv.bin");
    let data = clustered(30_000, dim, 12, 0.4, 15);
    exaseries::data::write_dataset(&path, &data).map_err(|e| e.to_string())?;
    let queries = mixed_queries(&data, dim, 100, 16);
    let mut notes = Vec::new();
    for measure in [DistanceKind::L2Squared, DistanceKind::dtw_default(dim)] {
        for batch in [exaseries::index::DEFAULT_DISK_BATCH_BYTES, 64 << 10] {
            let config = IndexConfig {
                leaf_capacity: 200,
                distance: measure,
                disk_batch_bytes: batch,
                ..IndexConfig::default()
            };
            let mem = Dataset::load(&path, dim, LoadMode::InMemory, false).map_err(|e| e.to_string())?;
            let file = Dataset::load(&path, dim, LoadMode::FileBacked, false).map_err(|e| e.to_string())?;
            let mem_index = build_index(&mem, config.clone()).map_err(|e| e.to_string())?;
            let disk_index = build_index(
                &file,
                IndexConfig {
                    storage: RawStorage::OnDisk,
                    ..config
                },
            )
            .map_err(|e| e.to_string())?;
            audit(&mem_index)?;
            audit(&disk_index)?;
            let opts = SearchOptions::new(10);
            let a = serial_indexed_search(&mem_index, &queries, measure, opts).map_err(|e| e.to_string())?;
            let b = exaseries::search::disk_search(&disk_index, &queries, measure, opts).map_err(|e| e.to_string())?;
            let wl = workload(100, 10, dim, measure);
            if answers_file(&a, &wl) != answers_file(&b, &wl) {
                return Err(format!("{measure}, batch {batch}: disk answers differ from memory answers"));
            }
            let peak = b.iter().map(|r| r.stats.peak_raw_bytes).max().unwrap_or(0);
            if peak > 2 * batch as u64 {
                return Err(format!("{measure}: resident raw bytes {peak} exceed 2 × {batch}"));
            }
            notes.push(format!("{measure}/{}KiB peak {}KiB", batch >> 10, peak >> 10));
        }
    }
    Ok(format!("byte-identical over 100 queries; {}", notes.join(", ")))
}

struct Large {
    dim: usize,
    data: Dataset,
    queries: Vec<f32>,
    index: IsaxIndex,
}

/// 100k clustered series of length 256 plus 100 held-out queries from the
/// same bundles, shared by the pruning and throughput criteria.
fn large() -> &'static Large {
    static LARGE: OnceLock<Large> = OnceLock::new();
    LARGE.get_or_init(|| {
        let (count, dim) = (100_000, 256);
        let mut all = clustered(count + 100, dim, 10, 0.5, 2024);
        let queries = all.split_off(count * dim);
        let data = Dataset::from_vec(all, dim, false).unwrap();
        let index = build_index(&data, IndexConfig::default()).unwrap();
        Large {
            dim,
            data,
            queries,
            index,
        }
    })
}

fn pruning_effectiveness() -> Outcome {
    let l = large();
    audit(&l.index)?;
    let m = DistanceKind::L2Squared;
    let n = l.data.len() as f64;
    let q = (l.queries.len() / l.dim) as f64;
    let opts = SearchOptions::new(1);
    let serial = total_stats(&serial_indexed_search(&l.index, &l.queries, m, opts).map_err(|e| e.to_string())?);
    let parallel =
        total_stats(&parallel_search(&l.index, &l.queries, m, opts.threads(8)).map_err(|e| e.to_string())?);
    let summaries = LbSummaries::new(&l.data, 16).map_err(|e| e.to_string())?;
    let lb = total_stats(&lb_bruteforce_search(&l.data, &summaries, &l.queries, m, opts).map_err(|e| e.to_string())?);
    let brute = total_stats(&bruteforce_search(&l.data, &l.queries, m, opts).map_err(|e| e.to_string())?);
    let serial_frac = serial.real_dists as f64 / (q * n);
    let parallel_frac = parallel.real_dists as f64 / (q * n);
    let skip_frac = 1.0 - lb.real_dists as f64 / brute.real_dists as f64;
    let detail = format!(
        "serial {:.2}% and parallel {:.2}% of series refined per query, lb-bruteforce skipped {:.2}%",
        100.0 * serial_frac,
        100.0 * parallel_frac,
        100.0 * skip_frac
    );
    if serial_frac <= 0.20 && parallel_frac <= 0.20 && skip_frac >= 0.30 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn timed(f: impl FnOnce() -> exaseries::Result<Vec<QueryResult>>) -> Result<(Duration, Vec<QueryResult>), String> {
    let start = Instant::now();
    let r = f().map_err(|e| e.to_string())?;
    Ok((start.elapsed(), r))
}

fn throughput() -> Outcome {
    let l = large();
    let m = DistanceKind::L2Squared;
    let workers = 8;
    let mut csv = String::from("engine,k,threads,wall_ms,real_dists,lb_skips\n");
    let mut at_k10 = (Duration::ZERO, Duration::ZERO);
    for k in [10, 100, 1000] {
        let opts = SearchOptions::new(k).threads(workers);
        let (pt, pr) = timed(|| parallel_search(&l.index, &l.queries, m, opts))?;
        let (bt, br) = timed(|| bruteforce_search(&l.data, &l.queries, m, opts))?;
        for (name, t, r) in [("parallel", pt, &pr), ("bruteforce", bt, &br)] {
            let s = total_stats(r);
            writeln!(csv, "{name},{k},{workers},{:.1},{},{}", t.as_secs_f64() * 1e3, s.real_dists, s.lb_skips)
                .unwrap();
        }
        if k == 10 {
            at_k10 = (pt, bt);
        }
    }
    print!("{csv}");
    let (pt, bt) = at_k10;
    let detail = format!(
        "k=10, {workers} workers, 100 queries: parallel {:.0} ms vs bruteforce {:.0} ms",
        pt.as_secs_f64() * 1e3,
        bt.as_secs_f64() * 1e3
    );
    if pt < bt {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn structural_audit() -> Outcome {
    let dim = 64;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("audit.bin");
    let idx_path = dir.path().join("audit.idx");
    let data = clustered(20_000, dim, 8, 0.3, 33);
    exaseries::data::write_dataset(&path, &data).map_err(|e| e.to_string())?;
    let queries = mixed_queries(&data, dim, 100, 34);
    let configs = [
        (RawStorage::InMemory, 1, 8, 16, DistanceKind::L2Squared),
        (RawStorage::InMemory, 40, 3, 8, DistanceKind::dtw_default(dim)),
        (RawStorage::OnDisk, 500, 8, 16, DistanceKind::L2Squared),
    ];
    for (storage, capacity, max_bits, segments, measure) in configs {
        let mode = match storage {
            RawStorage::InMemory => LoadMode::InMemory,
            RawStorage::OnDisk => LoadMode::FileBacked,
        };
        let ds = Dataset::load(&path, dim, mode, false).map_err(|e| e.to_string())?;
        let config = IndexConfig {
            segments,
            max_bits,
            leaf_capacity: capacity,
            storage,
            distance: measure,
            ..IndexConfig::default()
        };
        let index = build_index(&ds, config).map_err(|e| e.to_string())?;
        audit(&index)?;
        index.save(&idx_path).map_err(|e| e.to_string())?;
        let restored = IsaxIndex::open(&idx_path, None).map_err(|e| e.to_string())?;
        audit(&restored)?;
        let kind = if storage == RawStorage::OnDisk { EngineKind::Disk } else { EngineKind::Serial };
        let opts = SearchOptions::new(10);
        let a = Engine::from_index(kind, index).and_then(|e| e.search(&queries, opts));
        let b = Engine::from_index(kind, restored).and_then(|e| e.search(&queries, opts));
        let wl = workload(100, 10, dim, measure);
        let (a, b) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
        if answers_file(&a, &wl) != answers_file(&b, &wl) {
            return Err(format!("capacity {capacity}: restored index answers differ"));
        }
    }
    Ok(format!(
        "{} index audits passed across the suite; round trips preserve 100-query answers",
        AUDITED.load(Ordering::Relaxed)
    ))
}

fn decision_tree() -> Outcome {
    let mut rows = 0;
    for fits in [true, false] {
        for distributed in [false, true] {
            for gpu in [false, true] {
                let profile = EnvironmentProfile {
                    dataset_bytes: if fits { 1 << 30 } else { 8 << 30 },
                    available_memory_bytes: 4 << 30,
                    gpu_available: gpu,
                    distributed_available: distributed,
                };
                let (rec, engine, noted) = match (fits, distributed, gpu) {
                    (false, _, _) => (Recommendation::Disk, EngineKind::Disk, false),
                    (true, true, _) => (Recommendation::Distributed, EngineKind::Parallel, true),
                    (true, false, true) => (Recommendation::Gpu, EngineKind::Parallel, true),
                    (true, false, false) => (Recommendation::InMemory, EngineKind::Parallel, false),
                };
                let got = select_engine(&profile);
                if got.recommended != rec || got.engine != engine || got.note.is_some() != noted {
                    return Err(format!("{profile:?} gave {got:?}"));
                }
                if got != select_engine(&profile) {
                    return Err("select_engine is not deterministic".into());
                }
                rows += 1;
            }
        }
    }
    Ok(format!("{rows} profiles map to the four leaves"))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("exactness master suite", Duration::from_secs(300), exactness),
        ("lower-bound soundness", Duration::from_secs(60), lb_soundness),
        ("parallel determinism", Duration::from_secs(120), parallel_determinism),
        ("disk/memory equivalence", Duration::from_secs(180), disk_memory_equivalence),
        ("pruning effectiveness", Duration::from_secs(600), pruning_effectiveness),
        ("relaxed throughput", Duration::from_secs(600), throughput),
        ("index structural audit", Duration::from_secs(120), structural_audit),
        ("decision-tree conformance", Duration::from_secs(1), decision_tree),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let time = format!("{:.1}s, budget {}s", elapsed.as_secs_f64(), budget.as_secs());
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{time}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{time}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
