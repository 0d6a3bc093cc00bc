//! `exaseries` command-line tool.
//!
//! Exit codes: 0 on success, 1 when `verify` finds a mismatch, 2 on usage
//! or I/O errors.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use exaseries::answers::{compare_answers, format_answers, parse_answers, Workload};
use exaseries::data::write_dataset;
use exaseries::index::{build_index_with_threads, DEFAULT_LEAF_CAPACITY, DEFAULT_SEGMENTS};
use exaseries::search::total_stats;
use exaseries::summary::MAX_BITS;
use exaseries::synthetic::{clustered, random_walks, with_duplicates};
use exaseries::{Dataset, DistanceKind, Engine, EngineKind, IndexConfig, IsaxIndex, LoadMode, RawStorage, SearchOptions};

#[derive(Parser)]
#[command(name = "exaseries", version, about = "Exact k-NN search over data series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset (and optionally held-out queries)
    Gen(GenArgs),
    /// Build an index over a dataset and persist it
    Build(BuildArgs),
    /// Answer queries with one engine and write an answers file
    Search(SearchArgs),
    /// Write exhaustive-scan answers for a query set
    Groundtruth(GroundtruthArgs),
    /// Time engines over a sweep of k and emit CSV
    Bench(BenchArgs),
    /// Compare an answers file against a groundtruth file
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Measure {
    L2sq,
    Dtw,
}

#[derive(Clone, Copy, ValueEnum)]
enum Storage {
    Memory,
    Disk,
}

impl From<Storage> for RawStorage {
    fn from(s: Storage) -> Self {
        match s {
            Storage::Memory => RawStorage::InMemory,
            Storage::Disk => RawStorage::OnDisk,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Walks,
    Clustered,
    Duplicates,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long, value_enum, default_value_t = Measure::L2sq)]
    distance: Measure,
    /// Sakoe-Chiba radius; defaults to 5% of the series length, rounded up
    #[arg(long)]
    dtw_radius: Option<usize>,
    /// Z-normalize series and queries
    #[arg(long)]
    normalize: bool,
}

impl MeasureArgs {
    fn kind(&self, dim: usize) -> DistanceKind {
        match self.distance {
            Measure::L2sq => DistanceKind::L2Squared,
            Measure::Dtw => match self.dtw_radius {
                Some(radius) => DistanceKind::Dtw { radius },
                None => DistanceKind::dtw_default(dim),
            },
        }
    }
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long, default_value_t = DEFAULT_SEGMENTS)]
    segments: usize,
    #[arg(long, default_value_t = MAX_BITS)]
    max_bits: u8,
    #[arg(long, default_value_t = DEFAULT_LEAF_CAPACITY)]
    leaf_capacity: usize,
    #[arg(long, value_enum, default_value_t = Storage::Memory)]
    storage: Storage,
    #[command(flatten)]
    measure: MeasureArgs,
}

impl IndexArgs {
    fn config(&self, dim: usize) -> IndexConfig {
        IndexConfig {
            segments: self.segments,
            max_bits: self.max_bits,
            leaf_capacity: self.leaf_capacity,
            storage: self.storage.into(),
            normalize: self.measure.normalize,
            distance: self.measure.kind(dim),
            ..IndexConfig::default()
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, value_enum, default_value_t = GenKind::Clustered)]
    kind: GenKind,
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write this many extra series, drawn the same way, as queries
    #[arg(long, default_value_t = 0, requires = "queries_output")]
    queries: usize,
    #[arg(long)]
    queries_output: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    index_file: PathBuf,
    #[command(flatten)]
    index: IndexArgs,
    #[arg(long, default_value_t = default_threads())]
    threads: usize,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value = "parallel")]
    engine: EngineKind,
    /// Persisted index for indexed engines; otherwise one is built from --dataset
    #[arg(long)]
    index_file: Option<PathBuf>,
    /// Dataset file; overrides the path stored in --index-file
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Series length; taken from --index-file when omitted
    #[arg(long)]
    dim: Option<usize>,
    #[command(flatten)]
    index: IndexArgs,
    #[arg(long, default_value_t = default_threads())]
    threads: usize,
    /// Leaves refined before pruning starts (serial and parallel engines)
    #[arg(long, default_value_t = 1)]
    seed_leaves: usize,
    /// Answers file; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GroundtruthArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    measure: MeasureArgs,
    #[arg(long, default_value_t = default_threads())]
    threads: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    dim: usize,
    /// Comma-separated values of k
    #[arg(long, value_delimiter = ',', default_values_t = [10, 100, 1000])]
    k: Vec<usize>,
    /// Comma-separated engines
    #[arg(long, value_delimiter = ',', default_values = ["bruteforce", "lb-bruteforce", "serial", "parallel", "disk"])]
    engine: Vec<EngineKind>,
    #[command(flatten)]
    index: IndexArgs,
    #[arg(long, default_value_t = default_threads())]
    threads: usize,
    /// CSV file; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Reference answers, usually from `groundtruth`
    #[arg(long)]
    groundtruth: PathBuf,
    #[arg(long)]
    answers: PathBuf,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Build(a) => build(a),
        Command::Search(a) => search(a),
        Command::Groundtruth(a) => groundtruth(a),
        Command::Bench(a) => bench(a),
        Command::Verify(a) => return verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => std::io::stdout().write_all(text.as_bytes()).context("writing to stdout"),
    }
}

fn load_queries(path: &Path, dim: usize) -> Result<Vec<f32>> {
    let ds = Dataset::load(path, dim, LoadMode::InMemory, false)
        .with_context(|| format!("loading queries {}", path.display()))?;
    Ok(ds.to_memory(false)?)
}

fn load_dataset(path: &Path, dim: usize, file_backed: bool) -> Result<Dataset> {
    let mode = if file_backed { LoadMode::FileBacked } else { LoadMode::InMemory };
    Dataset::load(path, dim, mode, false).with_context(|| format!("loading dataset {}", path.display()))
}

fn workload_of(engine: &Engine, queries: usize, k: usize) -> Workload {
    Workload {
        queries,
        k,
        dim: engine.dim(),
        measure: engine.distance(),
        normalize: engine.is_normalized(),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    if a.dim == 0 {
        bail!("--dim must be positive");
    }
    let total = a.count + a.queries;
    let mut values = match a.kind {
        GenKind::Walks => random_walks(total, a.dim, a.seed),
        GenKind::Clustered => clustered(total, a.dim, a.clusters, a.noise, a.seed),
        GenKind::Duplicates => with_duplicates(total, a.dim, total / 10, a.seed),
    };
    let queries = values.split_off(a.count * a.dim);
    write_dataset(&a.output, &values).with_context(|| format!("writing {}", a.output.display()))?;
    if let Some(path) = &a.queries_output {
        write_dataset(path, &queries).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    let config = a.index.config(a.dim);
    let data = load_dataset(&a.dataset, a.dim, config.storage == RawStorage::OnDisk)?;
    let start = Instant::now();
    let index = build_index_with_threads(&data, config, a.threads)?;
    let report = index.audit().map_err(|e| anyhow::anyhow!("built index failed its audit: {e}"))?;
    index
        .save(&a.index_file)
        .with_context(|| format!("writing {}", a.index_file.display()))?;
    eprintln!(
        "indexed {} series in {:.2}s: {} leaves, depth {}, written to {}",
        index.len(),
        start.elapsed().as_secs_f64(),
        report.leaves,
        report.max_depth,
        a.index_file.display()
    );
    Ok(())
}

fn search(a: SearchArgs) -> Result<()> {
    let engine = match (&a.index_file, a.engine.uses_index()) {
        (Some(path), true) => {
            let index = IsaxIndex::open(path, a.dataset.as_deref())
                .with_context(|| format!("opening index {}", path.display()))?;
            if let Some(dim) = a.dim {
                if dim != index.dim() {
                    bail!("--dim {dim} does not match the index dimension {}", index.dim());
                }
            }
            Engine::from_index(a.engine, index)?
        }
        (Some(_), false) => bail!("engine {} does not use --index-file; pass --dataset", a.engine),
        (None, _) => {
            let Some(path) = &a.dataset else {
                bail!("either --index-file or --dataset is required");
            };
            let Some(dim) = a.dim else {
                bail!("--dim is required when searching a dataset directly");
            };
            let config = a.index.config(dim);
            let file_backed = a.engine == EngineKind::Disk || config.storage == RawStorage::OnDisk;
            Engine::build(a.engine, &load_dataset(path, dim, file_backed)?, config)?
        }
    };
    let queries = load_queries(&a.queries, engine.dim())?;
    let opts = SearchOptions::new(a.k).threads(a.threads).seed_leaves(a.seed_leaves);
    let results = engine.search(&queries, opts)?;
    let workload = workload_of(&engine, results.len(), a.k);
    emit(a.output.as_deref(), &format_answers(&workload, results.iter().map(|r| &r.answers[..])))
}

fn groundtruth(a: GroundtruthArgs) -> Result<()> {
    let config = IndexConfig {
        segments: 1,
        normalize: a.measure.normalize,
        distance: a.measure.kind(a.dim),
        ..IndexConfig::default()
    };
    let engine = Engine::build(EngineKind::Bruteforce, &load_dataset(&a.dataset, a.dim, false)?, config)?;
    let queries = load_queries(&a.queries, a.dim)?;
    let results = engine.search(&queries, SearchOptions::new(a.k).threads(a.threads))?;
    let workload = workload_of(&engine, results.len(), a.k);
    emit(a.output.as_deref(), &format_answers(&workload, results.iter().map(|r| &r.answers[..])))
}

fn bench(a: BenchArgs) -> Result<()> {
    let config = a.index.config(a.dim);
    let queries = load_queries(&a.queries, a.dim)?;
    let mut csv = String::from("engine,k,threads,wall_ms,real_dists,lb_skips\n");
    for &kind in &a.engine {
        let file_backed = kind == EngineKind::Disk || config.storage == RawStorage::OnDisk;
        let engine = Engine::build(kind, &load_dataset(&a.dataset, a.dim, file_backed)?, config.clone())?;
        let threads = match kind {
            EngineKind::Bruteforce | EngineKind::Parallel => a.threads,
            _ => 1,
        };
        for &k in &a.k {
            let start = Instant::now();
            let results = engine.search(&queries, SearchOptions::new(k).threads(threads))?;
            let wall = start.elapsed().as_secs_f64() * 1e3;
            let stats = total_stats(&results);
            writeln!(csv, "{kind},{k},{threads},{wall:.3},{},{}", stats.real_dists, stats.lb_skips)?;
        }
    }
    emit(a.output.as_deref(), &csv)
}

fn verify(a: VerifyArgs) -> ExitCode {
    let read = |path: &Path| -> Result<_> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        parse_answers(&text).with_context(|| format!("parsing {}", path.display()))
    };
    let (expected, actual) = match (read(&a.groundtruth), read(&a.answers)) {
        (Ok(e), Ok(a)) => (e, a),
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match compare_answers(&expected, &actual) {
        Ok(()) => {
            eprintln!("answers match ({} queries)", expected.rows.len());
            ExitCode::SUCCESS
        }
        Err(m) => {
            println!("mismatch: {m}");
            ExitCode::from(1)
        }
    }
}
