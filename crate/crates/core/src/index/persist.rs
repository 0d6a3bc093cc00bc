//! Binary index format, little-endian throughout:
//!
//! ```text
//! header
//!   magic           8 bytes  "ISAXIDX\0"
//!   version         u32
//!   dim (n)         u32
//!   count (N)       u64
//!   segments (w)    u16
//!   max_bits        u8
//!   leaf_capacity   u32
//!   storage_mode    u8       0 = memory, 1 = disk
//!   normalize       u8       0 / 1
//!   distance        u8       0 = l2sq, 1 = dtw
//!   dtw_radius      u32      0 for l2sq
//!   raw_checksum    u32      CRC-32 of the raw dataset file bytes
//!   raw_path_len    u16
//!   raw_path        raw_path_len bytes, UTF-8 (empty when not file-sourced)
//!   root_count      u32
//! roots, ascending key, each followed by its subtree in pre-order
//!   key             u64
//!   node
//!     tag           u8       0 = leaf, 1 = inner
//!     symbols       w bytes
//!     bits          w bytes
//!     inner: split segment u16, then child 0 subtree, then child 1 subtree
//!     leaf:  entry count u32, ids (count × u32), words (count × w bytes)
//! trailer
//!   crc32           u32      CRC-32 of every preceding byte
//! ```

use std::path::{Path, PathBuf};

use super::build::fill_min_ids;
use super::{IndexConfig, IsaxIndex, Leaf, Node, NodeId, NodeKind, RawStorage, DEFAULT_DISK_BATCH_BYTES};
use crate::data::{Dataset, LoadMode};
use crate::distance::DistanceKind;
use crate::error::{Error, Result};
use crate::summary::{ISaxWord, MAX_BITS};

pub const MAGIC: &[u8; 8] = b"ISAXIDX\0";
pub const FORMAT_VERSION: u32 = 1;

/// Fixed header of a persisted index.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexHeader {
    pub version: u32,
    pub dim: usize,
    pub count: usize,
    pub segments: usize,
    pub max_bits: u8,
    pub leaf_capacity: usize,
    pub storage: RawStorage,
    pub normalize: bool,
    pub distance: DistanceKind,
    pub raw_checksum: u32,
    pub raw_path: Option<PathBuf>,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).ok_or(Error::Truncated(what))?;
        let out = self.buf.get(self.pos..end).ok_or(Error::Truncated(what))?;
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }
    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

impl IsaxIndex {
    /// Serializes the index structure. Raw series are not included; only a
    /// reference (path and checksum) to the dataset they came from.
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = &self.config;
        let mut w = Writer { buf: Vec::new() };
        w.bytes(MAGIC);
        w.u32(FORMAT_VERSION);
        w.u32(self.dim as u32);
        w.u64(self.count as u64);
        w.u16(cfg.segments as u16);
        w.u8(cfg.max_bits);
        w.u32(cfg.leaf_capacity as u32);
        w.u8(match cfg.storage {
            RawStorage::InMemory => 0,
            RawStorage::OnDisk => 1,
        });
        w.u8(cfg.normalize as u8);
        match cfg.distance {
            DistanceKind::L2Squared => {
                w.u8(0);
                w.u32(0);
            }
            DistanceKind::Dtw { radius } => {
                w.u8(1);
                w.u32(radius as u32);
            }
        }
        w.u32(self.raw.checksum());
        let path = self
            .raw
            .path()
            .map(|p| p.to_string_lossy().into_owned())
            .unwrap_or_default();
        w.u16(path.len() as u16);
        w.bytes(path.as_bytes());
        w.u32(self.roots.len() as u32);
        for &(key, root) in &self.roots {
            w.u64(key);
            self.write_subtree(&mut w, root);
        }
        let crc = crc32fast::hash(&w.buf);
        w.u32(crc);
        w.buf
    }

    fn write_subtree(&self, w: &mut Writer, root: NodeId) {
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            let node = self.node(id);
            match &node.kind {
                NodeKind::Inner { segment, children } => {
                    w.u8(1);
                    w.bytes(&node.mask.symbols);
                    w.bytes(&node.mask.bits);
                    w.u16(*segment as u16);
                    stack.push(children[1]);
                    stack.push(children[0]);
                }
                NodeKind::Leaf(leaf) => {
                    w.u8(0);
                    w.bytes(&node.mask.symbols);
                    w.bytes(&node.mask.bits);
                    w.u32(leaf.ids.len() as u32);
                    for &id in &leaf.ids {
                        w.u32(id);
                    }
                    w.bytes(&leaf.words);
                }
            }
        }
    }

    /// Restores an index over `data`, which must be the dataset it was built
    /// from (dimension, count and checksum are verified).
    pub fn from_bytes(bytes: &[u8], data: &Dataset) -> Result<IsaxIndex> {
        let (header, mut r) = parse_header(bytes)?;
        if data.dim() != header.dim || data.len() != header.count {
            return Err(Error::Integrity(format!(
                "dataset is {} × {}, index expects {} × {}",
                data.len(),
                data.dim(),
                header.count,
                header.dim
            )));
        }
        if data.checksum() != header.raw_checksum {
            return Err(Error::ChecksumMismatch {
                what: "raw data",
                stored: header.raw_checksum,
                computed: data.checksum(),
            });
        }
        let config = IndexConfig {
            segments: header.segments,
            max_bits: header.max_bits,
            leaf_capacity: header.leaf_capacity,
            storage: header.storage,
            normalize: header.normalize,
            distance: header.distance,
            disk_batch_bytes: DEFAULT_DISK_BATCH_BYTES,
        };
        config
            .validate(header.dim)
            .map_err(|e| Error::Corrupt(format!("invalid stored configuration: {e}")))?;

        let root_count = r.u32("root count")? as usize;
        let mut nodes: Vec<Node> = Vec::new();
        let mut roots = Vec::with_capacity(root_count.min(1 << 20));
        for _ in 0..root_count {
            let key = r.u64("root key")?;
            if roots.last().is_some_and(|&(prev, _)| prev >= key) {
                return Err(Error::Corrupt("root keys out of order".into()));
            }
            let root = read_subtree(&mut r, &mut nodes, &config, header.count)?;
            roots.push((key, root));
        }
        if r.pos + 4 != bytes.len() {
            return Err(Error::Corrupt("trailing bytes after node stream".into()));
        }
        fill_min_ids(&mut nodes);

        let raw = match config.storage {
            RawStorage::InMemory => data.resident_copy(config.normalize)?,
            RawStorage::OnDisk => data.reopen_file_backed(config.normalize)?,
        };
        Ok(IsaxIndex {
            config,
            dim: header.dim,
            count: header.count,
            nodes,
            roots,
            raw,
        })
    }
}

impl IsaxIndex {
    /// Writes [`IsaxIndex::to_bytes`] to `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Loads an index file and the dataset it references. `dataset`
    /// overrides the stored path. The dataset is held in memory or on disk
    /// according to the stored storage mode.
    pub fn open(path: impl AsRef<Path>, dataset: Option<&Path>) -> Result<IsaxIndex> {
        let bytes = std::fs::read(path)?;
        let header = read_header(&bytes)?;
        let raw_path = dataset
            .map(Path::to_path_buf)
            .or(header.raw_path)
            .ok_or_else(|| Error::param("index has no dataset path; pass the dataset explicitly"))?;
        let mode = match header.storage {
            RawStorage::InMemory => LoadMode::InMemory,
            RawStorage::OnDisk => LoadMode::FileBacked,
        };
        let data = Dataset::load(&raw_path, header.dim, mode, false)?;
        IsaxIndex::from_bytes(&bytes, &data)
    }
}

/// Reads and validates only the header, e.g. to decide how to load the dataset.
pub fn read_header(bytes: &[u8]) -> Result<IndexHeader> {
    parse_header(bytes).map(|(h, _)| h)
}

fn parse_header(bytes: &[u8]) -> Result<(IndexHeader, Reader<'_>)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < r.pos + 4 {
        return Err(Error::Truncated("trailer"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch {
            what: "index",
            stored,
            computed,
        });
    }

    let dim = r.u32("dim")? as usize;
    let count = r.u64("count")? as usize;
    let segments = r.u16("segments")? as usize;
    let max_bits = r.u8("max_bits")?;
    let leaf_capacity = r.u32("leaf capacity")? as usize;
    let storage = match r.u8("storage mode")? {
        0 => RawStorage::InMemory,
        1 => RawStorage::OnDisk,
        other => return Err(Error::Corrupt(format!("storage mode {other}"))),
    };
    let normalize = match r.u8("normalize flag")? {
        0 => false,
        1 => true,
        other => return Err(Error::Corrupt(format!("normalize flag {other}"))),
    };
    let kind = r.u8("distance kind")?;
    let radius = r.u32("dtw radius")? as usize;
    let distance = match kind {
        0 => DistanceKind::L2Squared,
        1 => DistanceKind::Dtw { radius },
        other => return Err(Error::Corrupt(format!("distance kind {other}"))),
    };
    let raw_checksum = r.u32("raw checksum")?;
    let path_len = r.u16("raw path length")? as usize;
    let path = std::str::from_utf8(r.take(path_len, "raw path")?)
        .map_err(|_| Error::Corrupt("raw path is not UTF-8".into()))?;
    let raw_path = (!path.is_empty()).then(|| PathBuf::from(path));
    if segments == 0 || max_bits == 0 || max_bits > MAX_BITS {
        return Err(Error::Corrupt("invalid summary parameters".into()));
    }
    Ok((
        IndexHeader {
            version,
            dim,
            count,
            segments,
            max_bits,
            leaf_capacity,
            storage,
            normalize,
            distance,
            raw_checksum,
            raw_path,
        },
        r,
    ))
}

fn read_subtree(r: &mut Reader<'_>, nodes: &mut Vec<Node>, cfg: &IndexConfig, count: usize) -> Result<NodeId> {
    read_node(r, nodes, cfg, count, 1)
}

fn read_node(
    r: &mut Reader<'_>,
    nodes: &mut Vec<Node>,
    cfg: &IndexConfig,
    count: usize,
    depth: usize,
) -> Result<NodeId> {
    let w = cfg.segments;
    // each level below a root child adds one bit to one segment
    if depth > w * cfg.max_bits as usize {
        return Err(Error::Corrupt("tree deeper than the cardinality allows".into()));
    }
    let tag = r.u8("node tag")?;
    let symbols = r.take(w, "node mask")?.to_vec();
    let bits = r.take(w, "node mask")?.to_vec();
    if bits.iter().any(|&b| b == 0 || b > cfg.max_bits)
        || symbols.iter().zip(&bits).any(|(&s, &b)| (s as usize) >> b != 0)
    {
        return Err(Error::Corrupt(format!("invalid mask before byte {}", r.pos)));
    }
    let mask = ISaxWord { symbols, bits };
    let this = nodes.len();
    match tag {
        1 => {
            let segment = r.u16("split segment")? as usize;
            if segment >= w {
                return Err(Error::Corrupt(format!("split segment {segment}")));
            }
            nodes.push(Node {
                mask,
                min_id: u32::MAX,
                kind: NodeKind::Inner {
                    segment,
                    children: [0, 0],
                },
            });
            let left = read_node(r, nodes, cfg, count, depth + 1)?;
            let right = read_node(r, nodes, cfg, count, depth + 1)?;
            nodes[this].kind = NodeKind::Inner {
                segment,
                children: [left, right],
            };
        }
        0 => {
            let len = r.u32("leaf length")? as usize;
            let mut ids = Vec::with_capacity(len.min(r.buf.len() / 4));
            for _ in 0..len {
                let id = r.u32("leaf ids")?;
                if id as usize >= count {
                    return Err(Error::Corrupt(format!("series id {id} out of range")));
                }
                ids.push(id);
            }
            let words = r.take(len * w, "leaf words")?.to_vec();
            nodes.push(Node {
                mask,
                min_id: u32::MAX,
                kind: NodeKind::Leaf(Leaf { ids, words }),
            });
        }
        other => return Err(Error::Corrupt(format!("node tag {other}"))),
    }
    Ok(this as NodeId)
}
