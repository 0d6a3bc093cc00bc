//! Exact distances with early abandoning, and the envelope lower bound for DTW.
//!
//! All values are squared: L2-squared is `Σ (aᵢ − bᵢ)²` and DTW uses squared
//! pointwise cost, so the two are directly comparable. Sums run left to right
//! in `f64` over `f32` inputs.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{check_dims, Error, Result};

/// Distance measure used by a search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceKind {
    L2Squared,
    /// Sakoe-Chiba banded DTW; position `i` aligns only with `j` where `|i − j| ≤ radius`.
    Dtw { radius: usize },
}

impl DistanceKind {
    /// DTW with the default band of `ceil(0.05 · n)`.
    pub fn dtw_default(n: usize) -> Self {
        DistanceKind::Dtw {
            radius: default_dtw_radius(n),
        }
    }

    pub fn is_dtw(&self) -> bool {
        matches!(self, DistanceKind::Dtw { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistanceKind::L2Squared => "l2sq",
            DistanceKind::Dtw { .. } => "dtw",
        }
    }

    pub(crate) fn validate(&self, n: usize) -> Result<()> {
        if let DistanceKind::Dtw { radius } = *self {
            if radius > n {
                return Err(Error::param(format!("dtw radius {radius} exceeds series length {n}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistanceKind::L2Squared => f.write_str("l2sq"),
            DistanceKind::Dtw { radius } => write!(f, "dtw:{radius}"),
        }
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    /// Accepts `l2sq`, or `dtw:<radius>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2sq" => Ok(DistanceKind::L2Squared),
            _ => match s.strip_prefix("dtw:").map(str::parse) {
                Some(Ok(radius)) => Ok(DistanceKind::Dtw { radius }),
                _ => Err(Error::param(format!("unknown distance {s:?}"))),
            },
        }
    }
}

/// Band radius used when none is given: 5% of the series length, rounded up.
pub fn default_dtw_radius(n: usize) -> usize {
    (n * 5).div_ceil(100)
}

/// Result of a distance computation under an upper bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bounded {
    Value(f64),
    /// The running cost exceeded the bound; the exact value is at least the bound.
    Abandoned,
}

impl Bounded {
    pub fn value(self) -> Option<f64> {
        match self {
            Bounded::Value(v) => Some(v),
            Bounded::Abandoned => None,
        }
    }

    fn from_raw(v: f64) -> Self {
        if v == f64::INFINITY {
            Bounded::Abandoned
        } else {
            Bounded::Value(v)
        }
    }
}

pub fn l2_squared(a: &[f32], b: &[f32]) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    Ok(l2sq(a, b, f64::INFINITY))
}

/// L2-squared that stops once the partial sum exceeds `bound`.
pub fn l2_squared_bounded(a: &[f32], b: &[f32], bound: f64) -> Result<Bounded> {
    check_dims(a.len(), b.len())?;
    check_bound(bound)?;
    Ok(Bounded::from_raw(l2sq(a, b, bound)))
}

const ABANDON_STRIDE: usize = 16;

/// Returns `INFINITY` when abandoned. The sum is accumulated strictly in
/// order, so a completed value does not depend on `bound`.
#[inline]
pub(crate) fn l2sq(a: &[f32], b: &[f32], bound: f64) -> f64 {
    let mut sum = 0.0f64;
    for (ca, cb) in a.chunks(ABANDON_STRIDE).zip(b.chunks(ABANDON_STRIDE)) {
        for (&x, &y) in ca.iter().zip(cb) {
            let d = x as f64 - y as f64;
            sum += d * d;
        }
        if sum > bound {
            return f64::INFINITY;
        }
    }
    sum
}

/// Banded DTW with squared pointwise cost.
pub fn dtw(a: &[f32], b: &[f32], radius: usize) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    Ok(DtwScratch::default().compute(a, b, radius, f64::INFINITY))
}

/// Banded DTW abandoned once an entire DP row exceeds `bound`.
pub fn dtw_bounded(a: &[f32], b: &[f32], radius: usize, bound: f64) -> Result<Bounded> {
    check_dims(a.len(), b.len())?;
    check_bound(bound)?;
    Ok(Bounded::from_raw(DtwScratch::default().compute(a, b, radius, bound)))
}

fn check_bound(bound: f64) -> Result<()> {
    if bound.is_nan() || bound < 0.0 {
        return Err(Error::param(format!("bound must be non-negative, got {bound}")));
    }
    Ok(())
}

/// Two rolling DP rows of the band width, reused across calls.
#[derive(Debug, Default, Clone)]
pub(crate) struct DtwScratch {
    prev: Vec<f64>,
    curr: Vec<f64>,
}

impl DtwScratch {
    /// Row `i` stores cell `(i, j)` at slot `j − i + r`.
    #[allow(clippy::needless_range_loop)]
    pub(crate) fn compute(&mut self, a: &[f32], b: &[f32], radius: usize, bound: f64) -> f64 {
        let n = a.len();
        if n == 0 {
            return 0.0;
        }
        let r = radius.min(n - 1);
        let width = 2 * r + 1;
        self.prev.clear();
        self.prev.resize(width, f64::INFINITY);
        self.curr.clear();
        self.curr.resize(width, f64::INFINITY);

        for i in 0..n {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(n - 1);
            let mut row_min = f64::INFINITY;
            self.curr.fill(f64::INFINITY);
            let ai = a[i] as f64;
            for j in lo..=hi {
                let slot = j + r - i;
                let d = ai - b[j] as f64;
                let cost = d * d;
                let best = if i == 0 && j == 0 {
                    0.0
                } else {
                    let diag = if i > 0 && j > 0 { self.prev[slot] } else { f64::INFINITY };
                    let up = if i > 0 && slot + 1 < width {
                        self.prev[slot + 1]
                    } else {
                        f64::INFINITY
                    };
                    let left = if j > lo { self.curr[slot - 1] } else { f64::INFINITY };
                    diag.min(up).min(left)
                };
                let v = best + cost;
                self.curr[slot] = v;
                if v < row_min {
                    row_min = v;
                }
            }
            if row_min > bound {
                return f64::INFINITY;
            }
            std::mem::swap(&mut self.prev, &mut self.curr);
        }
        // after the final swap the last row lives in `prev`; cell (n-1, n-1) is slot r
        self.prev[r]
    }
}

/// Per-position running min/max of a series over its warping window.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub upper: Vec<f32>,
    pub lower: Vec<f32>,
    pub radius: usize,
}

impl Envelope {
    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }
}

/// Builds the `radius` envelope of `q` with monotone deques in `O(n)`.
pub fn build_envelope(q: &[f32], radius: usize) -> Envelope {
    let n = q.len();
    let mut upper = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    // window for position i is [i - r, i + r]; feed indices up to i + r
    let mut next = 0;
    for i in 0..n {
        let end = (i + radius).min(n - 1);
        while next <= end {
            while maxq.back().is_some_and(|&k| q[k] <= q[next]) {
                maxq.pop_back();
            }
            maxq.push_back(next);
            while minq.back().is_some_and(|&k| q[k] >= q[next]) {
                minq.pop_back();
            }
            minq.push_back(next);
            next += 1;
        }
        let start = i.saturating_sub(radius);
        while maxq.front().is_some_and(|&k| k < start) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&k| k < start) {
            minq.pop_front();
        }
        upper[i] = q[maxq[0]];
        lower[i] = q[minq[0]];
    }
    Envelope { upper, lower, radius }
}

/// Envelope (Keogh) lower bound of DTW between the envelope's series and `c`.
pub fn lb_dtw(env: &Envelope, c: &[f32]) -> Result<f64> {
    check_dims(env.len(), c.len())?;
    Ok(lb_keogh(env, c, f64::INFINITY))
}

#[inline]
pub(crate) fn lb_keogh(env: &Envelope, c: &[f32], bound: f64) -> f64 {
    let mut sum = 0.0f64;
    for (chunk, (up, lo)) in c
        .chunks(ABANDON_STRIDE)
        .zip(env.upper.chunks(ABANDON_STRIDE).zip(env.lower.chunks(ABANDON_STRIDE)))
    {
        for ((&x, &u), &l) in chunk.iter().zip(up).zip(lo) {
            let d = if x > u {
                x as f64 - u as f64
            } else if x < l {
                l as f64 - x as f64
            } else {
                continue;
            };
            sum += d * d;
        }
        if sum > bound {
            return f64::INFINITY;
        }
    }
    sum
}

/// Dispatches an exact bounded computation; `INFINITY` means abandoned.
#[inline]
pub(crate) fn bounded_distance(
    kind: DistanceKind,
    scratch: &mut DtwScratch,
    q: &[f32],
    s: &[f32],
    bound: f64,
) -> f64 {
    match kind {
        DistanceKind::L2Squared => l2sq(q, s, bound),
        DistanceKind::Dtw { radius } => scratch.compute(q, s, radius, bound),
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    /// Full `(n+1) × (n+1)` DP table, no banding tricks beyond the window test.
    pub fn dtw_full_table(a: &[f32], b: &[f32], radius: usize) -> f64 {
        let n = a.len();
        let mut t = vec![vec![f64::INFINITY; n + 1]; n + 1];
        t[0][0] = 0.0;
        for i in 1..=n {
            for j in 1..=n {
                if i.abs_diff(j) > radius {
                    continue;
                }
                let d = a[i - 1] as f64 - b[j - 1] as f64;
                let best = t[i - 1][j - 1].min(t[i - 1][j]).min(t[i][j - 1]);
                t[i][j] = best + d * d;
            }
        }
        t[n][n]
    }
}
