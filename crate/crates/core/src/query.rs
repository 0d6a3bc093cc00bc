//! Per-query summaries and the best-so-far pruning threshold.

use crate::data::{check_series, z_normalize_into};
use crate::distance::{build_envelope, DistanceKind, Envelope};
use crate::error::Result;
use crate::summary::{
    mindist_dtw_raw, mindist_dtw_uniform, mindist_l2_raw, mindist_l2_uniform, paa_into,
    symbol_max_bits, EnvelopeSegments, MAX_BITS,
};

/// The current k-th best answer of a query, as a pruning threshold.
///
/// A candidate with lower bound `lb` whose ids are at least `min_id` can
/// still enter the answer set only if `(lb, min_id) < (dist, id)`. The id
/// part keeps pruning exact under the ascending-id tie rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub dist: f64,
    pub id: u32,
}

impl Threshold {
    pub const UNBOUNDED: Threshold = Threshold {
        dist: f64::INFINITY,
        id: u32::MAX,
    };

    /// A plain distance threshold: admits only lower bounds strictly below `dist`.
    pub fn distance(dist: f64) -> Self {
        Threshold { dist, id: 0 }
    }

    /// The stricter of two thresholds under `(dist, id)` order.
    #[inline]
    pub fn tighter(self, other: Threshold) -> Threshold {
        match self.dist.total_cmp(&other.dist).then(self.id.cmp(&other.id)) {
            std::cmp::Ordering::Greater => other,
            _ => self,
        }
    }

    #[inline]
    pub fn admits(&self, lower_bound: f64, min_id: u32) -> bool {
        lower_bound < self.dist || (lower_bound == self.dist && min_id < self.id)
    }
}

/// A query prepared for one measure and one summary configuration.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    pub values: Vec<f32>,
    pub paa: Vec<f64>,
    /// 1-bit-per-segment root key, then the full word at `max_bits`.
    pub root_key: u64,
    pub word: Vec<u8>,
    pub measure: DistanceKind,
    pub envelope: Option<Envelope>,
    pub envelope_segments: Option<EnvelopeSegments>,
    pub(crate) n: usize,
}

impl PreparedQuery {
    pub fn new(
        query: &[f32],
        dim: usize,
        segments: usize,
        max_bits: u8,
        measure: DistanceKind,
        normalize: bool,
    ) -> Result<Self> {
        check_series(query, dim)?;
        measure.validate(dim)?;
        let mut values = query.to_vec();
        if normalize {
            z_normalize_into(query, &mut values);
        }
        let mut paa = vec![0.0; segments];
        paa_into(&values, &mut paa);
        let full: Vec<u8> = paa.iter().map(|&v| symbol_max_bits(v)).collect();
        let word = full.iter().map(|&s| s >> (MAX_BITS - max_bits)).collect();
        let root_key = root_key_of(&full, MAX_BITS);
        let (envelope, envelope_segments) = match measure {
            DistanceKind::L2Squared => (None, None),
            DistanceKind::Dtw { radius } => {
                let env = build_envelope(&values, radius);
                let segs = EnvelopeSegments::new(&env, segments)?;
                (Some(env), Some(segs))
            }
        };
        Ok(Self {
            values,
            paa,
            root_key,
            word,
            measure,
            envelope,
            envelope_segments,
            n: dim,
        })
    }

    /// Lower bound against a node mask with per-segment bits.
    #[inline]
    pub fn bound_for_mask(&self, symbols: &[u8], bits: &[u8]) -> f64 {
        match &self.envelope_segments {
            None => mindist_l2_raw(&self.paa, symbols, bits, self.n),
            Some(env) => mindist_dtw_raw(env, symbols, bits, self.n),
        }
    }

    /// Lower bound against a full-cardinality entry word.
    #[inline]
    pub fn bound_for_word(&self, symbols: &[u8], bits: u8) -> f64 {
        match &self.envelope_segments {
            None => mindist_l2_uniform(&self.paa, symbols, bits, self.n),
            Some(env) => mindist_dtw_uniform(env, symbols, bits, self.n),
        }
    }
}

/// Root key: the top bit of each segment's symbol, first segment most significant.
pub(crate) fn root_key_of(word: &[u8], bits: u8) -> u64 {
    word.iter()
        .fold(0u64, |key, &s| (key << 1) | ((s >> (bits - 1)) & 1) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_tie_rule() {
        let t = Threshold { dist: 2.0, id: 5 };
        assert!(t.admits(1.9, 100));
        assert!(t.admits(2.0, 4));
        assert!(!t.admits(2.0, 5));
        assert!(!t.admits(2.1, 0));
        assert!(Threshold::UNBOUNDED.admits(1e300, 0));
        assert!(!Threshold::distance(0.0).admits(0.0, 0));
    }

    #[test]
    fn root_key_bits() {
        assert_eq!(root_key_of(&[0, 255, 128, 127], 8), 0b0110);
        assert_eq!(root_key_of(&[1, 0, 1], 1), 0b101);
    }
}
