//! Engine construction behind one interface, and the two-call session facade.

use crate::data::Dataset;
use crate::distance::DistanceKind;
use crate::error::{Error, Result};
use crate::index::{build_index, IndexConfig, IsaxIndex, RawStorage};
use crate::search::{
    bruteforce_search, disk_search, lb_bruteforce_search, parallel_search, serial_indexed_search, EngineKind,
    LbSummaries, QueryResult, SearchOptions,
};

#[derive(Debug)]
enum Backend {
    Flat(Dataset),
    Summaries(Dataset, LbSummaries),
    Index(IsaxIndex),
}

/// A search engine ready to answer queries: the raw data plus whatever
/// summaries or index the engine kind needs.
#[derive(Debug)]
pub struct Engine {
    kind: EngineKind,
    distance: DistanceKind,
    normalize: bool,
    backend: Backend,
}

impl Engine {
    /// Prepares `kind` over `data`. Indexed kinds build an index from
    /// `config`; the disk engine always uses disk storage.
    pub fn build(kind: EngineKind, data: &Dataset, config: IndexConfig) -> Result<Engine> {
        config.validate(data.dim())?;
        let normalize = config.normalize || data.is_normalized();
        let raw = || {
            if data.is_file_backed() {
                data.reopen_file_backed(normalize)
            } else {
                data.resident_copy(normalize)
            }
        };
        let distance = config.distance;
        let backend = match kind {
            EngineKind::Bruteforce => Backend::Flat(raw()?),
            EngineKind::LbBruteforce => {
                let raw = raw()?;
                let summaries = LbSummaries::new(&raw, config.segments)?;
                Backend::Summaries(raw, summaries)
            }
            EngineKind::Serial | EngineKind::Parallel => Backend::Index(build_index(data, config)?),
            EngineKind::Disk => Backend::Index(build_index(
                data,
                IndexConfig {
                    storage: RawStorage::OnDisk,
                    ..config
                },
            )?),
        };
        Ok(Engine {
            kind,
            distance,
            normalize,
            backend,
        })
    }

    /// Wraps an existing index for an indexed engine kind.
    pub fn from_index(kind: EngineKind, index: IsaxIndex) -> Result<Engine> {
        if !kind.uses_index() {
            return Err(Error::param(format!("engine {kind} does not use an index")));
        }
        if kind == EngineKind::Disk && index.config().storage != RawStorage::OnDisk {
            return Err(Error::param("the disk engine needs an index built with disk storage"));
        }
        Ok(Engine {
            kind,
            distance: index.config().distance,
            normalize: index.config().normalize,
            backend: Backend::Index(index),
        })
    }

    pub fn kind(&self) -> EngineKind {
        self.kind
    }

    pub fn distance(&self) -> DistanceKind {
        self.distance
    }

    /// Whether series and queries are z-normalized before comparison.
    pub fn is_normalized(&self) -> bool {
        self.normalize
    }

    pub fn index(&self) -> Option<&IsaxIndex> {
        match &self.backend {
            Backend::Index(i) => Some(i),
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.backend {
            Backend::Flat(d) | Backend::Summaries(d, _) => d.dim(),
            Backend::Index(i) => i.dim(),
        }
    }

    pub fn len(&self) -> usize {
        match &self.backend {
            Backend::Flat(d) | Backend::Summaries(d, _) => d.len(),
            Backend::Index(i) => i.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Answers a row-major block of queries with the engine's measure.
    pub fn search(&self, queries: &[f32], opts: SearchOptions) -> Result<Vec<QueryResult>> {
        let m = self.distance;
        match (&self.backend, self.kind) {
            (Backend::Flat(d), _) => bruteforce_search(d, queries, m, opts),
            (Backend::Summaries(d, s), _) => lb_bruteforce_search(d, s, queries, m, opts),
            (Backend::Index(i), EngineKind::Serial) => serial_indexed_search(i, queries, m, opts),
            (Backend::Index(i), EngineKind::Disk) => disk_search(i, queries, m, opts),
            (Backend::Index(i), _) => parallel_search(i, queries, m, opts),
        }
    }
}

/// Row-major `queries × k` answer matrices. Cells past the number of
/// series hold id `-1` and distance `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnMatrix {
    pub k: usize,
    pub ids: Vec<i64>,
    pub distances: Vec<f32>,
}

impl KnnMatrix {
    pub fn row(&self, query: usize) -> (&[i64], &[f32]) {
        let r = query * self.k..(query + 1) * self.k;
        (&self.ids[r.clone()], &self.distances[r])
    }
}

/// Build-then-search facade over one engine kind.
#[derive(Debug)]
pub struct SearchSession {
    engine: EngineKind,
    config: IndexConfig,
    threads: usize,
    built: Option<Engine>,
}

impl SearchSession {
    pub fn new(engine: EngineKind, config: IndexConfig) -> Self {
        Self {
            engine,
            config,
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            built: None,
        }
    }

    /// Default index parameters with the given measure.
    pub fn with_distance(engine: EngineKind, distance: DistanceKind) -> Self {
        Self::new(
            engine,
            IndexConfig {
                distance,
                ..IndexConfig::default()
            },
        )
    }

    pub fn set_threads(&mut self, threads: usize) -> Result<()> {
        if threads == 0 {
            return Err(Error::param("thread count must be at least 1"));
        }
        self.threads = threads;
        Ok(())
    }

    pub fn is_built(&self) -> bool {
        self.built.is_some()
    }

    pub fn engine(&self) -> Option<&Engine> {
        self.built.as_ref()
    }

    /// Builds over `n_db` series of length `d` held in `db`.
    ///
    /// The segment count is clamped to `d` so short series work with the
    /// default configuration.
    pub fn build_index(&mut self, db: &[f32], n_db: usize, d: usize) -> Result<()> {
        self.built = None;
        if n_db == 0 || d == 0 {
            return Err(Error::param("buildIndex needs at least one series of positive length"));
        }
        if n_db.checked_mul(d) != Some(db.len()) {
            return Err(Error::param(format!(
                "block holds {} values, expected {n_db} × {d}",
                db.len()
            )));
        }
        if self.engine == EngineKind::Disk {
            return Err(Error::param(
                "the disk engine reads series from a file; use build_from_dataset with a file-backed dataset",
            ));
        }
        let data = Dataset::from_vec(db.to_vec(), d, false)?;
        self.build_from_dataset(&data)
    }

    /// Builds over an already opened dataset.
    pub fn build_from_dataset(&mut self, data: &Dataset) -> Result<()> {
        self.built = None;
        let config = IndexConfig {
            segments: self.config.segments.min(data.dim()),
            ..self.config.clone()
        };
        self.built = Some(Engine::build(self.engine, data, config)?);
        Ok(())
    }

    /// Top-`k` search for `n_q` queries held row-major in `q`.
    pub fn search_index(&self, q: &[f32], n_q: usize, k: usize) -> Result<KnnMatrix> {
        let engine = self
            .built
            .as_ref()
            .ok_or(Error::State("searchIndex called before a successful buildIndex"))?;
        if k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        if n_q.checked_mul(engine.dim()) != Some(q.len()) {
            return Err(Error::param(format!(
                "query block holds {} values, expected {n_q} × {}",
                q.len(),
                engine.dim()
            )));
        }
        let results = engine.search(q, SearchOptions::new(k).threads(self.threads))?;
        let mut ids = vec![-1i64; n_q * k];
        let mut distances = vec![f32::INFINITY; n_q * k];
        for (row, r) in results.iter().enumerate() {
            for (rank, a) in r.answers.iter().enumerate() {
                ids[row * k + rank] = a.id as i64;
                distances[row * k + rank] = a.dist as f32;
            }
        }
        Ok(KnnMatrix { k, ids, distances })
    }
}
