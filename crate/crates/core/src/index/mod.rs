//! iSAX index: bulk construction, tree layout, auditing and persistence.
//!
//! The root fans out over the 1-bit word (one bit per segment). Below the
//! root every inner node has two children that refine one segment by one
//! more bit. Leaves hold `(series id, full-cardinality word)` entries.
//!
//! The index owns its raw-data handle: a memory-resident copy (normalized if
//! configured) or a file-backed handle read on demand during refinement.

mod build;
mod persist;

use std::fmt;
use std::str::FromStr;

use crate::data::Dataset;
use crate::distance::DistanceKind;
use crate::error::{Error, Result};
use crate::query::{PreparedQuery, Threshold};
use crate::summary::{ISaxWord, MAX_BITS};

pub use build::{build_index, build_index_with_threads};
pub(crate) use build::compute_words;
pub use persist::{read_header, IndexHeader, FORMAT_VERSION, MAGIC};

pub type NodeId = u32;

/// Where raw series live while searching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawStorage {
    InMemory,
    OnDisk,
}

impl FromStr for RawStorage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "memory" => Ok(RawStorage::InMemory),
            "disk" => Ok(RawStorage::OnDisk),
            _ => Err(Error::param(format!("unknown storage mode {s:?}"))),
        }
    }
}

impl fmt::Display for RawStorage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RawStorage::InMemory => "memory",
            RawStorage::OnDisk => "disk",
        })
    }
}

pub const DEFAULT_SEGMENTS: usize = 16;
pub const DEFAULT_LEAF_CAPACITY: usize = 2000;
pub const DEFAULT_DISK_BATCH_BYTES: usize = 4 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexConfig {
    pub segments: usize,
    pub max_bits: u8,
    pub leaf_capacity: usize,
    pub storage: RawStorage,
    pub normalize: bool,
    pub distance: DistanceKind,
    /// Upper bound on raw bytes read per refinement batch in disk mode.
    /// A runtime setting; not persisted.
    pub disk_batch_bytes: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            segments: DEFAULT_SEGMENTS,
            max_bits: MAX_BITS,
            leaf_capacity: DEFAULT_LEAF_CAPACITY,
            storage: RawStorage::InMemory,
            normalize: false,
            distance: DistanceKind::L2Squared,
            disk_batch_bytes: DEFAULT_DISK_BATCH_BYTES,
        }
    }
}

impl IndexConfig {
    /// Checks the configuration against a series length.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.segments == 0 || self.segments > dim {
            return Err(Error::param(format!(
                "segments must be in 1..={dim}, got {}",
                self.segments
            )));
        }
        if self.segments > 64 {
            return Err(Error::param("at most 64 segments are supported"));
        }
        if self.max_bits == 0 || self.max_bits > MAX_BITS {
            return Err(Error::param(format!(
                "max_bits must be in 1..={MAX_BITS}, got {}",
                self.max_bits
            )));
        }
        if self.leaf_capacity == 0 {
            return Err(Error::param("leaf capacity must be at least 1"));
        }
        if self.disk_batch_bytes == 0 {
            return Err(Error::param("disk batch size must be positive"));
        }
        self.distance.validate(dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub ids: Vec<u32>,
    /// `ids.len() × segments` symbols at `max_bits`.
    pub words: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Inner { segment: usize, children: [NodeId; 2] },
    Leaf(Leaf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub mask: ISaxWord,
    /// Smallest series id in the subtree, `u32::MAX` when empty.
    pub min_id: u32,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf(_))
    }
}

/// A leaf that survived node-level pruning, with its lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafCandidate {
    pub node: NodeId,
    pub lower_bound: f64,
}

#[derive(Debug)]
pub struct IsaxIndex {
    pub(crate) config: IndexConfig,
    pub(crate) dim: usize,
    pub(crate) count: usize,
    pub(crate) nodes: Vec<Node>,
    /// Root children sorted by key.
    pub(crate) roots: Vec<(u64, NodeId)>,
    pub(crate) raw: Dataset,
}

impl IsaxIndex {
    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn roots(&self) -> &[(u64, NodeId)] {
        &self.roots
    }

    pub fn raw(&self) -> &Dataset {
        &self.raw
    }

    pub fn set_disk_batch_bytes(&mut self, bytes: usize) -> Result<()> {
        if bytes == 0 {
            return Err(Error::param("disk batch size must be positive"));
        }
        self.config.disk_batch_bytes = bytes;
        Ok(())
    }

    /// Ids of all leaves, in pre-order.
    pub fn leaves(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack: Vec<NodeId> = self.roots.iter().rev().map(|&(_, n)| n).collect();
        while let Some(id) = stack.pop() {
            match &self.node(id).kind {
                NodeKind::Leaf(_) => out.push(id),
                NodeKind::Inner { children, .. } => {
                    stack.push(children[1]);
                    stack.push(children[0]);
                }
            }
        }
        out
    }

    /// Prepares a query for this index: validates it, applies the index's
    /// normalization and computes the summaries the measure needs.
    pub fn prepare_query(&self, query: &[f32], measure: DistanceKind) -> Result<PreparedQuery> {
        self.check_measure(measure)?;
        PreparedQuery::new(
            query,
            self.dim,
            self.config.segments,
            self.config.max_bits,
            measure,
            self.config.normalize,
        )
    }

    /// DTW pruning needs DTW-valid node bounds; an index built for L2 is not
    /// queried with DTW or vice versa.
    pub(crate) fn check_measure(&self, measure: DistanceKind) -> Result<()> {
        if measure.is_dtw() != self.config.distance.is_dtw() {
            return Err(Error::IncompatibleMeasure(format!(
                "index built for {}, query uses {}",
                self.config.distance.name(),
                measure.name()
            )));
        }
        measure.validate(self.dim)
    }

    /// Leaves whose node-level lower bound is admitted by `threshold`.
    ///
    /// Inner nodes are bounded too, and a rejected inner node hides its whole
    /// subtree; child regions are contained in the parent's, so this never
    /// drops a leaf that would have been admitted.
    pub fn leaf_candidates(&self, query: &PreparedQuery, threshold: Threshold) -> Vec<LeafCandidate> {
        let mut out = Vec::new();
        let mut stack: Vec<NodeId> = self.roots.iter().rev().map(|&(_, n)| n).collect();
        while let Some(id) = stack.pop() {
            let node = self.node(id);
            if node.min_id == u32::MAX {
                continue;
            }
            let lb = query.bound_for_mask(&node.mask.symbols, &node.mask.bits);
            if !threshold.admits(lb, node.min_id) {
                continue;
            }
            match &node.kind {
                NodeKind::Leaf(_) => out.push(LeafCandidate {
                    node: id,
                    lower_bound: lb,
                }),
                NodeKind::Inner { children, .. } => {
                    stack.push(children[1]);
                    stack.push(children[0]);
                }
            }
        }
        out
    }

    /// The leaf the query's own word descends to. When no root child shares
    /// the query's 1-bit key, descends from the root child with the smallest
    /// lower bound instead.
    pub fn home_leaf(&self, query: &PreparedQuery) -> Option<NodeId> {
        let start = match self.roots.binary_search_by_key(&query.root_key, |&(k, _)| k) {
            Ok(pos) => self.roots[pos].1,
            Err(_) => self
                .roots
                .iter()
                .filter(|&&(_, n)| self.node(n).min_id != u32::MAX)
                .map(|&(_, n)| {
                    let m = &self.node(n).mask;
                    (query.bound_for_mask(&m.symbols, &m.bits), n)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))?
                .1,
        };
        let mut cur = start;
        loop {
            match &self.node(cur).kind {
                NodeKind::Leaf(_) => return Some(cur),
                NodeKind::Inner { segment, children } => {
                    let bits = self.node(cur).mask.bits[*segment] + 1;
                    let bit = (query.word[*segment] >> (self.config.max_bits - bits)) & 1;
                    let preferred = children[bit as usize];
                    // an empty branch has nothing to seed from
                    cur = if self.node(preferred).min_id == u32::MAX {
                        children[1 - bit as usize]
                    } else {
                        preferred
                    };
                }
            }
        }
    }

    /// Walks the whole tree and checks its structural invariants.
    pub fn audit(&self) -> std::result::Result<AuditReport, String> {
        build::audit(self)
    }
}

/// Summary of a successful structural audit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub leaves: usize,
    pub entries: usize,
    pub max_depth: usize,
    pub overflow_leaves: usize,
}
