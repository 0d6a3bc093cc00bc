//! PAA, Gaussian breakpoints, iSAX words and the summary-level lower bounds.
//!
//! Breakpoints for every cardinality come from one table of the 255
//! quantiles `Φ⁻¹(j / 256)`. The thresholds for `2^c` regions are every
//! `2^(8−c)`-th entry of that table, so lower-cardinality tables are exact
//! subsets and a word at `c` bits is the top `c` bits of the 8-bit word.

use std::sync::OnceLock;

use crate::distance::Envelope;
use crate::error::{Error, Result};

/// Largest supported per-segment cardinality, in bits.
pub const MAX_BITS: u8 = 8;

const TABLE_LEN: usize = (1 << MAX_BITS) - 1;

fn quantiles() -> &'static [f64; TABLE_LEN] {
    static TABLE: OnceLock<[f64; TABLE_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; TABLE_LEN];
        for (j, slot) in t.iter_mut().enumerate() {
            *slot = inverse_normal_cdf((j + 1) as f64 / (1 << MAX_BITS) as f64);
        }
        t
    })
}

/// Standard-normal quantile function (Wichura's AS 241, ~1e-16 relative).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        1.331_416_678_917_843_8e2,
        1.971_590_950_306_551_3e3,
        1.373_169_376_550_946e4,
        4.592_195_393_154_987e4,
        6.726_577_092_700_87e4,
        3.343_057_558_358_813e4,
        2.509_080_928_730_122_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091e1,
        6.871_870_074_920_579e2,
        5.394_196_021_424_751e3,
        2.121_379_430_158_659_7e4,
        3.930_789_580_009_271e4,
        2.872_908_573_572_194_3e4,
        5.226_495_278_852_854e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_545,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        2.417_807_251_774_506e-1,
        2.272_384_498_926_918_4e-2,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        6.897_673_349_851e-1,
        1.481_039_764_274_800_8e-1,
        1.519_866_656_361_645_7e-2,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_9e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_104,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        2.965_605_718_285_049e-1,
        2.653_218_952_657_612_4e-2,
        1.242_660_947_388_078_4e-3,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_88e-1,
        1.369_298_809_227_358e-1,
        1.487_536_129_085_061_5e-2,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_7e-15,
    ];
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::param(format!("cardinality bits must be in 1..={MAX_BITS}, got {bits}")));
    }
    Ok(())
}

/// Sorted thresholds separating the `2^bits` equiprobable regions.
pub fn breakpoints(bits: u8) -> Result<Vec<f64>> {
    check_bits(bits)?;
    let step = 1usize << (MAX_BITS - bits);
    let table = quantiles();
    Ok((1..(1usize << bits)).map(|j| table[j * step - 1]).collect())
}

/// `[low, high)` interval of region `symbol` at `bits` bits.
#[inline]
pub fn region(symbol: u8, bits: u8) -> (f64, f64) {
    let table = quantiles();
    let shift = MAX_BITS - bits;
    let s = symbol as usize;
    let low = if s == 0 {
        f64::NEG_INFINITY
    } else {
        table[(s << shift) - 1]
    };
    let high = if s + 1 == 1usize << bits {
        f64::INFINITY
    } else {
        table[((s + 1) << shift) - 1]
    };
    (low, high)
}

/// Symbol of `value` at the full 8-bit cardinality: the number of
/// thresholds `≤ value`, so a value on a threshold falls in the upper region.
#[inline]
pub fn symbol_max_bits(value: f64) -> u8 {
    quantiles().partition_point(|&t| t <= value) as u8
}

/// Segment `j` of `w` over a length-`n` series. The last segment absorbs
/// any remainder.
#[inline]
pub fn segment_range(n: usize, w: usize, j: usize) -> std::ops::Range<usize> {
    let base = n / w;
    let start = j * base;
    let end = if j + 1 == w { n } else { start + base };
    start..end
}

fn check_segments(n: usize, w: usize) -> Result<()> {
    if w == 0 || w > n {
        return Err(Error::param(format!("segment count {w} must be in 1..={n}")));
    }
    Ok(())
}

/// Piecewise aggregate approximation: the mean of each of `w` segments.
pub fn paa(series: &[f32], w: usize) -> Result<Vec<f64>> {
    check_segments(series.len(), w)?;
    let mut out = vec![0.0; w];
    paa_into(series, &mut out);
    Ok(out)
}

pub(crate) fn paa_into(series: &[f32], out: &mut [f64]) {
    let (n, w) = (series.len(), out.len());
    for (j, o) in out.iter_mut().enumerate() {
        let seg = &series[segment_range(n, w, j)];
        *o = seg.iter().map(|&v| v as f64).sum::<f64>() / seg.len() as f64;
    }
}

/// Per-segment symbols with their own cardinality.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ISaxWord {
    pub symbols: Vec<u8>,
    pub bits: Vec<u8>,
}

impl ISaxWord {
    pub fn segments(&self) -> usize {
        self.symbols.len()
    }

    /// Lowers every segment to `bits` (which must not exceed the current bits).
    pub fn truncate_to(&self, bits: &[u8]) -> ISaxWord {
        let symbols = self
            .symbols
            .iter()
            .zip(&self.bits)
            .zip(bits)
            .map(|((&s, &have), &want)| {
                debug_assert!(want <= have);
                s >> (have - want)
            })
            .collect();
        ISaxWord {
            symbols,
            bits: bits.to_vec(),
        }
    }

    /// True when `self` (a finer word) lies inside the region of `mask`.
    pub fn matches_mask(&self, mask: &ISaxWord) -> bool {
        self.symbols
            .iter()
            .zip(&self.bits)
            .zip(mask.symbols.iter().zip(&mask.bits))
            .all(|((&s, &b), (&ms, &mb))| mb <= b && s >> (b - mb) == ms)
    }
}

/// iSAX word of a PAA vector with per-segment bit counts.
pub fn isax_word(paa: &[f64], bits: &[u8]) -> Result<ISaxWord> {
    if paa.len() != bits.len() {
        return Err(Error::param("paa and bit vectors differ in length"));
    }
    for &b in bits {
        check_bits(b)?;
    }
    let symbols = paa
        .iter()
        .zip(bits)
        .map(|(&v, &b)| symbol_max_bits(v) >> (MAX_BITS - b))
        .collect();
    Ok(ISaxWord {
        symbols,
        bits: bits.to_vec(),
    })
}

/// Word with the same cardinality on every segment.
pub fn isax_word_uniform(paa: &[f64], bits: u8) -> Result<ISaxWord> {
    isax_word(paa, &vec![bits; paa.len()])
}

#[inline]
fn gap(value_low: f64, value_high: f64, low: f64, high: f64) -> f64 {
    if value_high < low {
        low - value_high
    } else if value_low > high {
        value_low - high
    } else {
        0.0
    }
}

/// Lower bound of L2-squared between a query (by its PAA) and any series of
/// length `n` summarized by `word`.
pub fn mindist_paa_isax(paa_q: &[f64], word: &ISaxWord, n: usize) -> Result<f64> {
    check_word(word, paa_q.len(), n)?;
    Ok(mindist_l2_raw(paa_q, &word.symbols, &word.bits, n))
}

/// Per-segment query envelope bounds for DTW pruning.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSegments {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl EnvelopeSegments {
    /// Segment-wise minimum of the lower envelope and maximum of the upper.
    pub fn new(env: &Envelope, w: usize) -> Result<Self> {
        let n = env.len();
        check_segments(n, w)?;
        let mut min = Vec::with_capacity(w);
        let mut max = Vec::with_capacity(w);
        for j in 0..w {
            let r = segment_range(n, w, j);
            min.push(env.lower[r.clone()].iter().fold(f64::INFINITY, |m, &v| m.min(v as f64)));
            max.push(env.upper[r].iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64)));
        }
        Ok(Self { min, max })
    }

    pub fn segments(&self) -> usize {
        self.min.len()
    }
}

/// Lower bound of banded DTW between the query owning `env` and any series
/// of length `n` summarized by `word`.
pub fn mindist_dtw(env: &EnvelopeSegments, word: &ISaxWord, n: usize) -> Result<f64> {
    check_word(word, env.segments(), n)?;
    Ok(mindist_dtw_raw(env, &word.symbols, &word.bits, n))
}

fn check_word(word: &ISaxWord, w: usize, n: usize) -> Result<()> {
    if word.segments() != w || word.bits.len() != w {
        return Err(Error::param(format!(
            "word has {} segments, query summary has {w}",
            word.segments()
        )));
    }
    check_segments(n, w)?;
    for (&s, &b) in word.symbols.iter().zip(&word.bits) {
        check_bits(b)?;
        if (s as usize) >= 1usize << b {
            return Err(Error::param(format!("symbol {s} out of range for {b} bits")));
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn mindist_l2_raw(paa_q: &[f64], symbols: &[u8], bits: &[u8], n: usize) -> f64 {
    let w = paa_q.len();
    let mut sum = 0.0;
    for j in 0..w {
        let (lo, hi) = region(symbols[j], bits[j]);
        let g = gap(paa_q[j], paa_q[j], lo, hi);
        if g > 0.0 {
            sum += segment_range(n, w, j).len() as f64 * g * g;
        }
    }
    sum
}

#[inline]
pub(crate) fn mindist_dtw_raw(env: &EnvelopeSegments, symbols: &[u8], bits: &[u8], n: usize) -> f64 {
    let w = env.segments();
    let mut sum = 0.0;
    for j in 0..w {
        let (lo, hi) = region(symbols[j], bits[j]);
        let g = gap(env.min[j], env.max[j], lo, hi);
        if g > 0.0 {
            sum += segment_range(n, w, j).len() as f64 * g * g;
        }
    }
    sum
}

/// Same as [`mindist_l2_raw`] for words stored at a uniform `bits`.
#[inline]
pub(crate) fn mindist_l2_uniform(paa_q: &[f64], symbols: &[u8], bits: u8, n: usize) -> f64 {
    let w = paa_q.len();
    let mut sum = 0.0;
    for j in 0..w {
        let (lo, hi) = region(symbols[j], bits);
        let g = gap(paa_q[j], paa_q[j], lo, hi);
        if g > 0.0 {
            sum += segment_range(n, w, j).len() as f64 * g * g;
        }
    }
    sum
}

#[inline]
pub(crate) fn mindist_dtw_uniform(env: &EnvelopeSegments, symbols: &[u8], bits: u8, n: usize) -> f64 {
    let w = env.segments();
    let mut sum = 0.0;
    for (j, &sym) in symbols.iter().enumerate().take(w) {
        let (lo, hi) = region(sym, bits);
        let g = gap(env.min[j], env.max[j], lo, hi);
        if g > 0.0 {
            sum += segment_range(n, w, j).len() as f64 * g * g;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::{build_envelope, dtw, l2_squared};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::function::erf::erfc;

    /// Standard normal quantile by bisection on the erfc-based CDF.
    fn quantile_by_bisection(p: f64) -> f64 {
        let cdf = |x: f64| 0.5 * erfc(-x / std::f64::consts::SQRT_2);
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn random_walk(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
        let mut x = 0.0f32;
        let raw: Vec<f32> = (0..n)
            .map(|_| {
                x += rng.random_range(-1.0..1.0);
                x
            })
            .collect();
        crate::data::z_normalize(&raw).unwrap()
    }

    #[test]
    fn breakpoint_examples() {
        assert_eq!(breakpoints(1).unwrap(), vec![0.0]);
        let b2 = breakpoints(2).unwrap();
        for (got, want) in b2.iter().zip([-0.67449, 0.0, 0.67449]) {
            assert!((got - want).abs() < 1e-4);
        }
        assert!(breakpoints(0).is_err());
        assert!(breakpoints(9).is_err());
    }

    #[test]
    fn quantiles_match_bisection_oracle() {
        for (j, &q) in quantiles().iter().enumerate() {
            let p = (j + 1) as f64 / 256.0;
            assert!((q - quantile_by_bisection(p)).abs() < 1e-9, "j={j}");
        }
        for p in [1e-10, 1e-5, 0.01, 0.3, 0.97, 1.0 - 1e-9] {
            assert!((inverse_normal_cdf(p) - quantile_by_bisection(p)).abs() < 1e-8, "p={p}");
        }
    }

    #[test]
    fn tables_are_symmetric_nested_and_increasing() {
        for bits in 1..=MAX_BITS {
            let t = breakpoints(bits).unwrap();
            assert_eq!(t.len(), (1 << bits) - 1);
            let last = t.len() - 1;
            for j in 0..t.len() {
                assert!((t[j] + t[last - j]).abs() < 1e-6);
            }
            assert!(t.windows(2).all(|p| p[0] < p[1]));
            if bits < MAX_BITS {
                let finer = breakpoints(bits + 1).unwrap();
                assert!(t.iter().all(|v| finer.contains(v)));
            }
        }
    }

    #[test]
    fn paa_examples() {
        assert_eq!(paa(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), vec![1.5, 3.5]);
        let s = [0.5, -1.0, 2.0];
        assert_eq!(paa(&s, 3).unwrap(), vec![0.5, -1.0, 2.0]);
        assert!(paa(&s, 0).is_err());
        assert!(paa(&s, 4).is_err());
        // remainder goes to the last segment
        assert_eq!(paa(&[1.0, 1.0, 4.0, 5.0, 6.0], 2).unwrap(), vec![1.0, 5.0]);
    }

    #[test]
    fn paa_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s: Vec<f32> = (0..256).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = paa(&s, 16).unwrap();
        for j in 0..16 {
            let mut acc = 0.0f64;
            for i in 0..16 {
                acc += s[j * 16 + i] as f64;
            }
            assert!((got[j] - acc / 16.0).abs() < 1e-6);
        }
    }

    #[test]
    fn word_examples() {
        let w = isax_word_uniform(&[-5.0, 5.0], 1).unwrap();
        assert_eq!(w.symbols, vec![0, 1]);
        let t = breakpoints(2).unwrap();
        let on = isax_word_uniform(&[t[0], t[2]], 2).unwrap();
        assert_eq!(on.symbols, vec![1, 3]);
        assert_eq!(isax_word_uniform(&[0.0], 1).unwrap().symbols, vec![1]);
    }

    #[test]
    fn prefix_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let p: Vec<f64> = (0..16).map(|_| rng.random_range(-3.5..3.5)).collect();
            let w8 = isax_word_uniform(&p, 8).unwrap();
            for bits in 1..8 {
                let direct = isax_word_uniform(&p, bits).unwrap();
                assert_eq!(w8.truncate_to(&[bits; 16]), direct);
                assert!(w8.matches_mask(&direct));
            }
        }
    }

    #[test]
    fn mindist_zero_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_walk(&mut rng, 64);
        let p = paa(&q, 8).unwrap();
        let own = isax_word_uniform(&p, 8).unwrap();
        assert_eq!(mindist_paa_isax(&p, &own, 64).unwrap(), 0.0);
        let coarse = isax_word_uniform(&p, 1).unwrap();
        assert_eq!(mindist_paa_isax(&p, &coarse, 64).unwrap(), 0.0);

        let env = EnvelopeSegments::new(&build_envelope(&q, 3), 8).unwrap();
        assert_eq!(mindist_dtw(&env, &own, 64).unwrap(), 0.0);

        let full = EnvelopeSegments::new(&build_envelope(&q, 64), 8).unwrap();
        for _ in 0..50 {
            let s = random_walk(&mut rng, 64);
            let sw = isax_word_uniform(&paa(&s, 8).unwrap(), 8).unwrap();
            // every region of a normalized series intersects the query's global range
            let lbd = mindist_dtw(&full, &sw, 64).unwrap();
            let (lo, hi) = (full.min[0], full.max[0]);
            let intersects = sw
                .symbols
                .iter()
                .all(|&sym| {
                    let (a, b) = region(sym, 8);
                    a <= hi && b >= lo
                });
            assert_eq!(intersects, lbd == 0.0);
        }

        let bad = ISaxWord {
            symbols: vec![0; 4],
            bits: vec![1; 4],
        };
        assert!(mindist_paa_isax(&p, &bad, 64).is_err());
    }

    #[test]
    fn lower_bounds_hold_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..2000 {
            let q = random_walk(&mut rng, 64);
            let s = random_walk(&mut rng, 64);
            let pq = paa(&q, 8).unwrap();
            let ws = isax_word_uniform(&paa(&s, 8).unwrap(), 8).unwrap();
            assert!(mindist_paa_isax(&pq, &ws, 64).unwrap() <= l2_squared(&q, &s).unwrap());
            let env = EnvelopeSegments::new(&build_envelope(&q, 3), 8).unwrap();
            assert!(mindist_dtw(&env, &ws, 64).unwrap() <= dtw(&q, &s, 3).unwrap());
        }
    }

    #[test]
    fn uneven_segments_stay_sound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let q = random_walk(&mut rng, 70);
            let s = random_walk(&mut rng, 70);
            let pq = paa(&q, 16).unwrap();
            let ws = isax_word_uniform(&paa(&s, 16).unwrap(), 8).unwrap();
            assert!(mindist_paa_isax(&pq, &ws, 70).unwrap() <= l2_squared(&q, &s).unwrap());
        }
    }
}
