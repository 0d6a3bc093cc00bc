//! Plain-text answer files.
//!
//! The first line is a header with the workload parameters. Each following
//! line is `query rank id distance`, distances written with six significant
//! digits. Nothing engine-specific is written, so equal answers give
//! byte-identical files.

use std::fmt::{self, Write as _};

use crate::distance::DistanceKind;
use crate::error::{Error, Result};
use crate::search::Answer;

const HEADER_PREFIX: &str = "# knn-answers";
/// Relative tolerance on distances when comparing answer files.
pub const DISTANCE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub queries: usize,
    pub k: usize,
    pub dim: usize,
    pub measure: DistanceKind,
    pub normalize: bool,
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{HEADER_PREFIX} queries={} k={} dim={} measure={} normalize={}",
            self.queries, self.k, self.dim, self.measure, self.normalize
        )
    }
}

/// Renders an answer file for one answer list per query.
pub fn format_answers<'a>(workload: &Workload, answers: impl IntoIterator<Item = &'a [Answer]>) -> String {
    let mut out = String::new();
    writeln!(out, "{workload}").expect("writing to a String");
    for (q, list) in answers.into_iter().enumerate() {
        for (rank, a) in list.iter().enumerate() {
            writeln!(out, "{q} {rank} {} {:.5e}", a.id, a.dist).expect("writing to a String");
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerFile {
    pub header: String,
    /// Answers per query, in rank order.
    pub rows: Vec<Vec<Answer>>,
}

/// Parses an answer file, requiring contiguous ranks per query.
pub fn parse_answers(text: &str) -> Result<AnswerFile> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .filter(|h| h.starts_with(HEADER_PREFIX))
        .ok_or_else(|| Error::Corrupt("answer file has no header line".into()))?
        .to_string();
    let queries = header
        .split_whitespace()
        .find_map(|f| f.strip_prefix("queries="))
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(|| Error::Corrupt("answer header lacks queries=".into()))?;
    let mut rows: Vec<Vec<Answer>> = vec![Vec::new(); queries];
    for (n, line) in lines.enumerate() {
        let bad = || Error::Corrupt(format!("malformed answer line {}: {line:?}", n + 2));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [q, rank, id, dist] = fields[..] else {
            return Err(bad());
        };
        let (q, rank): (usize, usize) = (q.parse().map_err(|_| bad())?, rank.parse().map_err(|_| bad())?);
        let id: u32 = id.parse().map_err(|_| bad())?;
        let dist: f64 = dist.parse().map_err(|_| bad())?;
        let row = rows.get_mut(q).ok_or_else(bad)?;
        if rank != row.len() {
            return Err(bad());
        }
        row.push(Answer { id, dist });
    }
    Ok(AnswerFile { header, rows })
}

/// The first place two answer files disagree.
#[derive(Debug, Clone, PartialEq)]
pub enum Mismatch {
    Header { expected: String, actual: String },
    Entry { query: usize, rank: usize, detail: String },
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mismatch::Header { expected, actual } => {
                write!(f, "headers differ: expected {expected:?}, got {actual:?}")
            }
            Mismatch::Entry { query, rank, detail } => write!(f, "query {query} rank {rank}: {detail}"),
        }
    }
}

/// Compares `actual` against `expected`: ids and order exactly, distances
/// within [`DISTANCE_TOLERANCE`] relative.
pub fn compare_answers(expected: &AnswerFile, actual: &AnswerFile) -> std::result::Result<(), Mismatch> {
    if expected.header != actual.header {
        return Err(Mismatch::Header {
            expected: expected.header.clone(),
            actual: actual.header.clone(),
        });
    }
    for (query, (e, a)) in expected.rows.iter().zip(&actual.rows).enumerate() {
        for rank in 0..e.len().max(a.len()) {
            let mismatch = |detail: String| Mismatch::Entry { query, rank, detail };
            match (e.get(rank), a.get(rank)) {
                (Some(x), Some(y)) if x.id != y.id => {
                    return Err(mismatch(format!("expected id {}, got {}", x.id, y.id)));
                }
                (Some(x), Some(y)) if !distances_close(x.dist, y.dist) => {
                    return Err(mismatch(format!("expected distance {:e}, got {:e}", x.dist, y.dist)));
                }
                (Some(x), None) => return Err(mismatch(format!("missing answer (expected id {})", x.id))),
                (None, Some(y)) => return Err(mismatch(format!("unexpected answer id {}", y.id))),
                _ => {}
            }
        }
    }
    Ok(())
}

fn distances_close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= DISTANCE_TOLERANCE * a.abs().max(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn workload() -> Workload {
        Workload {
            queries: 2,
            k: 2,
            dim: 8,
            measure: DistanceKind::Dtw { radius: 1 },
            normalize: true,
        }
    }

    #[test]
    fn format_shape() {
        let a = [Answer { id: 3, dist: 0.0 }, Answer { id: 1, dist: 12.345678 }];
        let text = format_answers(&workload(), [&a[..], &a[..1]]);
        assert_eq!(
            text,
            "# knn-answers queries=2 k=2 dim=8 measure=dtw:1 normalize=true\n\
             0 0 3 0.00000e0\n0 1 1 1.23457e1\n1 0 3 0.00000e0\n"
        );
        let parsed = parse_answers(&text).unwrap();
        assert_eq!(parsed.rows[0][1].id, 1);
        assert_eq!(parsed.rows[1].len(), 1);
    }

    #[test]
    fn first_mismatch_is_reported() {
        let base = [Answer { id: 3, dist: 1.0 }, Answer { id: 1, dist: 2.0 }];
        let other = [Answer { id: 3, dist: 1.0005 }, Answer { id: 4, dist: 2.0 }];
        let e = parse_answers(&format_answers(&workload(), [&base[..], &base[..]])).unwrap();
        let a = parse_answers(&format_answers(&workload(), [&base[..], &other[..]])).unwrap();
        assert_eq!(
            compare_answers(&e, &a),
            Err(Mismatch::Entry {
                query: 1,
                rank: 1,
                detail: "expected id 1, got 4".into()
            })
        );
        let short = parse_answers(&format_answers(&workload(), [&base[..], &base[..1]])).unwrap();
        assert!(matches!(compare_answers(&e, &short), Err(Mismatch::Entry { query: 1, rank: 1, .. })));
    }

    #[test]
    fn rejects_rank_gaps() {
        assert!(parse_answers("# knn-answers queries=1 k=2\n0 1 3 1e0\n").is_err());
        assert!(parse_answers("0 0 3 1e0\n").is_err());
    }
}
