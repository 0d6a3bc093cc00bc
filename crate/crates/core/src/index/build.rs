use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{AuditReport, IndexConfig, IsaxIndex, Leaf, Node, NodeId, NodeKind, RawStorage};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::query::root_key_of;
use crate::summary::{paa_into, symbol_max_bits, ISaxWord, MAX_BITS};

const WORD_CHUNK_ROWS: usize = 4096;

/// Builds an index over `data` on the current rayon pool.
pub fn build_index(data: &Dataset, config: IndexConfig) -> Result<IsaxIndex> {
    let dim = data.dim();
    config.validate(dim)?;
    if data.len() >= u32::MAX as usize {
        return Err(Error::param("datasets are limited to u32::MAX - 1 series"));
    }
    let normalize = config.normalize || data.is_normalized();
    let raw = match config.storage {
        RawStorage::InMemory => data.resident_copy(normalize)?,
        RawStorage::OnDisk => data.reopen_file_backed(normalize)?,
    };
    let config = IndexConfig { normalize, ..config };
    let words = compute_words(&raw, config.segments, config.max_bits)?;
    let (nodes, roots) = build_tree(&words, &config, raw.len());
    Ok(IsaxIndex {
        config,
        dim,
        count: raw.len(),
        nodes,
        roots,
        raw,
    })
}

/// Builds with a dedicated pool of `threads` workers. The result does not
/// depend on the worker count.
pub fn build_index_with_threads(data: &Dataset, config: IndexConfig, threads: usize) -> Result<IsaxIndex> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::param(format!("cannot start build pool: {e}")))?;
    pool.install(|| build_index(data, config))
}

/// Full-cardinality words for every series at `max_bits`, `len × segments` bytes.
pub(crate) fn compute_words(raw: &Dataset, segments: usize, max_bits: u8) -> Result<Vec<u8>> {
    let (dim, w) = (raw.dim(), segments);
    let shift = MAX_BITS - max_bits;
    let mut words = vec![0u8; raw.len() * w];
    let word_of = |series: &[f32], out: &mut [u8], paa: &mut [f64]| {
        paa_into(series, paa);
        for (o, &v) in out.iter_mut().zip(paa.iter()) {
            *o = symbol_max_bits(v) >> shift;
        }
    };
    match raw.as_slice() {
        Some(values) => {
            words
                .par_chunks_mut(w * WORD_CHUNK_ROWS)
                .zip(values.par_chunks(dim * WORD_CHUNK_ROWS))
                .for_each(|(out, rows)| {
                    let mut paa = vec![0.0; w];
                    for (o, s) in out.chunks_exact_mut(w).zip(rows.chunks_exact(dim)) {
                        word_of(s, o, &mut paa);
                    }
                });
        }
        None => {
            let mut buf = vec![0.0f32; dim * WORD_CHUNK_ROWS];
            for (chunk_idx, out) in words.chunks_mut(w * WORD_CHUNK_ROWS).enumerate() {
                let rows = out.len() / w;
                let buf = &mut buf[..rows * dim];
                raw.read_rows(chunk_idx * WORD_CHUNK_ROWS, buf)?;
                out.par_chunks_mut(w)
                    .zip(buf.par_chunks(dim))
                    .for_each_init(|| vec![0.0; w], |paa, (o, s)| word_of(s, o, paa));
            }
        }
    }
    Ok(words)
}

/// Per-branch builder state. Nodes reference each other by local index.
struct Branch<'a> {
    words: &'a [u8],
    config: &'a IndexConfig,
    nodes: Vec<Node>,
    /// Segment where the round-robin split search starts, per node.
    next_split: Vec<usize>,
}

impl Branch<'_> {
    fn word(&self, id: u32) -> &[u8] {
        let w = self.config.segments;
        &self.words[id as usize * w..(id as usize + 1) * w]
    }

    fn insert(&mut self, id: u32) {
        let max_bits = self.config.max_bits;
        let mut cur = 0usize;
        while let NodeKind::Inner { segment, children } = self.nodes[cur].kind {
            let bits = self.nodes[cur].mask.bits[segment] + 1;
            let bit = (self.word(id)[segment] >> (max_bits - bits)) & 1;
            cur = children[bit as usize] as usize;
        }
        let w = self.config.segments;
        let start = id as usize * w;
        let word = &self.words[start..start + w];
        let NodeKind::Leaf(leaf) = &mut self.nodes[cur].kind else {
            unreachable!()
        };
        leaf.ids.push(id);
        leaf.words.extend_from_slice(word);
        if leaf.ids.len() > self.config.leaf_capacity {
            self.split(cur);
        }
    }

    /// Round-robin from `next_split`, skipping segments at `max_bits`.
    fn choose_segment(&self, node: usize) -> Option<usize> {
        let w = self.config.segments;
        let bits = &self.nodes[node].mask.bits;
        (0..w)
            .map(|k| (self.next_split[node] + k) % w)
            .find(|&s| bits[s] < self.config.max_bits)
    }

    fn split(&mut self, node: usize) {
        // leaves whose mask is at full cardinality everywhere overflow instead
        let Some(segment) = self.choose_segment(node) else {
            return;
        };
        let w = self.config.segments;
        let max_bits = self.config.max_bits;
        let NodeKind::Leaf(leaf) = std::mem::replace(
            &mut self.nodes[node].kind,
            NodeKind::Leaf(Leaf {
                ids: Vec::new(),
                words: Vec::new(),
            }),
        ) else {
            unreachable!()
        };
        let parent_mask = self.nodes[node].mask.clone();
        let child_bits = parent_mask.bits[segment] + 1;
        let mut halves = [
            Leaf {
                ids: Vec::new(),
                words: Vec::new(),
            },
            Leaf {
                ids: Vec::new(),
                words: Vec::new(),
            },
        ];
        for (&id, word) in leaf.ids.iter().zip(leaf.words.chunks_exact(w)) {
            let bit = (word[segment] >> (max_bits - child_bits)) & 1;
            let half = &mut halves[bit as usize];
            half.ids.push(id);
            half.words.extend_from_slice(word);
        }
        let first_child = self.nodes.len();
        for (bit, half) in halves.into_iter().enumerate() {
            let mut mask = parent_mask.clone();
            mask.bits[segment] = child_bits;
            mask.symbols[segment] = (mask.symbols[segment] << 1) | bit as u8;
            self.nodes.push(Node {
                mask,
                min_id: u32::MAX,
                kind: NodeKind::Leaf(half),
            });
            self.next_split.push((segment + 1) % w);
        }
        self.nodes[node].kind = NodeKind::Inner {
            segment,
            children: [first_child as NodeId, first_child as NodeId + 1],
        };
        for child in [first_child, first_child + 1] {
            let over = match &self.nodes[child].kind {
                NodeKind::Leaf(l) => l.ids.len() > self.config.leaf_capacity,
                NodeKind::Inner { .. } => false,
            };
            if over {
                self.split(child);
            }
        }
    }
}

fn build_branch(words: &[u8], config: &IndexConfig, key: u64, ids: &[u32]) -> Vec<Node> {
    let w = config.segments;
    let symbols = (0..w).map(|j| ((key >> (w - 1 - j)) & 1) as u8).collect();
    let mut branch = Branch {
        words,
        config,
        nodes: vec![Node {
            mask: ISaxWord {
                symbols,
                bits: vec![1; w],
            },
            min_id: u32::MAX,
            kind: NodeKind::Leaf(Leaf {
                ids: Vec::new(),
                words: Vec::new(),
            }),
        }],
        next_split: vec![0],
    };
    for &id in ids {
        branch.insert(id);
    }
    branch.nodes
}

/// Groups ids by root key, builds each branch independently (inserting in
/// id order), then lays branches out in key order.
fn build_tree(words: &[u8], config: &IndexConfig, count: usize) -> (Vec<Node>, Vec<(u64, NodeId)>) {
    let w = config.segments;
    let mut groups: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
    for id in 0..count {
        let key = root_key_of(&words[id * w..(id + 1) * w], config.max_bits);
        groups.entry(key).or_default().push(id as u32);
    }
    let groups: Vec<(u64, Vec<u32>)> = groups.into_iter().collect();
    let branches: Vec<Vec<Node>> = groups
        .par_iter()
        .map(|(key, ids)| build_branch(words, config, *key, ids))
        .collect();

    let mut nodes = Vec::with_capacity(branches.iter().map(Vec::len).sum());
    let mut roots = Vec::with_capacity(groups.len());
    for ((key, _), branch) in groups.iter().zip(branches) {
        roots.push((*key, nodes.len() as NodeId));
        append_preorder(branch, &mut nodes);
    }
    fill_min_ids(&mut nodes);
    (nodes, roots)
}

/// Moves a branch (rooted at its index 0) into `out` in pre-order, the same
/// order the persisted format uses.
fn append_preorder(mut branch: Vec<Node>, out: &mut Vec<Node>) {
    let placeholder = || NodeKind::Leaf(Leaf {
        ids: Vec::new(),
        words: Vec::new(),
    });
    // (local index, slot in `out` of the parent and which child it is)
    let mut stack: Vec<(usize, Option<(usize, usize)>)> = vec![(0, None)];
    while let Some((local, parent)) = stack.pop() {
        let pos = out.len();
        let kind = std::mem::replace(&mut branch[local].kind, placeholder());
        let mask = std::mem::replace(&mut branch[local].mask, ISaxWord { symbols: Vec::new(), bits: Vec::new() });
        if let Some((p, slot)) = parent {
            if let NodeKind::Inner { children, .. } = &mut out[p].kind {
                children[slot] = pos as NodeId;
            }
        }
        if let NodeKind::Inner { children, .. } = &kind {
            stack.push((children[1] as usize, Some((pos, 1))));
            stack.push((children[0] as usize, Some((pos, 0))));
        }
        out.push(Node {
            mask,
            min_id: u32::MAX,
            kind,
        });
    }
}

/// Children always sit after their parent, so one reverse pass suffices.
pub(super) fn fill_min_ids(nodes: &mut [Node]) {
    for i in (0..nodes.len()).rev() {
        let min = match &nodes[i].kind {
            NodeKind::Leaf(leaf) => leaf.ids.iter().copied().min().unwrap_or(u32::MAX),
            NodeKind::Inner { children, .. } => {
                nodes[children[0] as usize].min_id.min(nodes[children[1] as usize].min_id)
            }
        };
        nodes[i].min_id = min;
    }
}

pub(super) fn audit(index: &IsaxIndex) -> std::result::Result<AuditReport, String> {
    let cfg = &index.config;
    let w = cfg.segments;
    let mut seen = vec![false; index.count];
    let mut report = AuditReport::default();
    let mut stack: Vec<(NodeId, usize)> = Vec::new();

    for (pos, &(key, root)) in index.roots.iter().enumerate() {
        if pos > 0 && index.roots[pos - 1].0 >= key {
            return Err("root keys are not strictly increasing".into());
        }
        let mask = &index.node(root).mask;
        if mask.bits.iter().any(|&b| b != 1) || root_key_of(&mask.symbols, 1) != key {
            return Err(format!("root child {root} does not match key {key:#x}"));
        }
        stack.push((root, 1));
    }

    while let Some((id, depth)) = stack.pop() {
        let node = index.nodes.get(id as usize).ok_or(format!("dangling node {id}"))?;
        report.max_depth = report.max_depth.max(depth);
        match &node.kind {
            NodeKind::Inner { segment, children } => {
                let mut min = u32::MAX;
                for (bit, &child) in children.iter().enumerate() {
                    let c = index.nodes.get(child as usize).ok_or(format!("dangling node {child}"))?;
                    for j in 0..w {
                        let (pb, cb) = (node.mask.bits[j], c.mask.bits[j]);
                        let (ps, cs) = (node.mask.symbols[j], c.mask.symbols[j]);
                        let ok = if j == *segment {
                            cb == pb + 1 && cs == (ps << 1) | bit as u8
                        } else {
                            cb == pb && cs == ps
                        };
                        if !ok {
                            return Err(format!("child {child} of {id} differs beyond segment {segment}"));
                        }
                    }
                    min = min.min(c.min_id);
                    stack.push((child, depth + 1));
                }
                if min != node.min_id {
                    return Err(format!("node {id} has stale min id"));
                }
            }
            NodeKind::Leaf(leaf) => {
                report.leaves += 1;
                if leaf.words.len() != leaf.ids.len() * w {
                    return Err(format!("leaf {id} word table has wrong length"));
                }
                let at_full = node.mask.bits.iter().all(|&b| b == cfg.max_bits);
                if leaf.ids.len() > cfg.leaf_capacity {
                    if !at_full {
                        return Err(format!("leaf {id} exceeds capacity but is still splittable"));
                    }
                    report.overflow_leaves += 1;
                }
                for (&sid, word) in leaf.ids.iter().zip(leaf.words.chunks_exact(w)) {
                    let slot = seen.get_mut(sid as usize).ok_or(format!("series id {sid} out of range"))?;
                    if *slot {
                        return Err(format!("series {sid} appears in more than one leaf"));
                    }
                    *slot = true;
                    let full = ISaxWord {
                        symbols: word.to_vec(),
                        bits: vec![cfg.max_bits; w],
                    };
                    if !full.matches_mask(&node.mask) {
                        return Err(format!("series {sid} does not match the mask of leaf {id}"));
                    }
                }
                if leaf.ids.iter().copied().min().unwrap_or(u32::MAX) != node.min_id {
                    return Err(format!("leaf {id} has stale min id"));
                }
                report.entries += leaf.ids.len();
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(format!("series {missing} is not in any leaf"));
    }
    verify_words(index)?;
    Ok(report)
}

/// Recomputes every stored word from the raw series.
fn verify_words(index: &IsaxIndex) -> std::result::Result<(), String> {
    let words = compute_words(&index.raw, index.config.segments, index.config.max_bits).map_err(|e| e.to_string())?;
    let w = index.config.segments;
    for node in &index.nodes {
        if let NodeKind::Leaf(leaf) = &node.kind {
            for (&sid, word) in leaf.ids.iter().zip(leaf.words.chunks_exact(w)) {
                let s = sid as usize;
                if &words[s * w..(s + 1) * w] != word {
                    return Err(format!("stored word of series {sid} does not match its data"));
                }
            }
        }
    }
    Ok(())
}
