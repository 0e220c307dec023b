//! Bit-level codec for 32-bit float parameters.
//!
//! Bit 0 (the mantissa LSB) of every stored word is overwritten so that the
//! whole 32-bit word has even popcount. A word with odd popcount has taken
//! an odd number of bit flips since encoding; scrubbing replaces it with
//! `+0.0`, which is itself an even-parity word.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::TensorF32;

/// A 32-bit pattern, viewed interchangeably as an IEEE-754 single.
///
/// Bit 31 is the sign, bits 30..=23 the exponent and bits 22..=0 the mantissa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word32(pub u32);

impl Word32 {
    pub const ZERO: Word32 = Word32(0);

    pub fn from_f32(v: f32) -> Self {
        Word32(v.to_bits())
    }

    pub fn to_f32(self) -> f32 {
        f32::from_bits(self.0)
    }

    pub fn popcount(self) -> u32 {
        popcount32(self.0)
    }
}

impl From<f32> for Word32 {
    fn from(v: f32) -> Self {
        Word32::from_f32(v)
    }
}

impl From<Word32> for f32 {
    fn from(w: Word32) -> Self {
        w.to_f32()
    }
}

pub const SIGN_BIT: u32 = 31;
pub const EXPONENT_MSB: u32 = 30;
pub const EXPONENT_LSB: u32 = 23;
pub const PARITY_BIT: u32 = 0;

#[inline]
pub fn popcount32(w: u32) -> u32 {
    w.count_ones()
}

/// Forces even parity over all 32 bits by toggling bit 0 when needed.
#[inline]
pub fn encode_word(w: u32) -> u32 {
    w ^ (w.count_ones() & 1)
}

/// `true` when the word has even parity.
#[inline]
pub fn check_word(w: u32) -> bool {
    w.count_ones() & 1 == 0
}

pub fn flip_bit(w: u32, pos: u32) -> Result<u32> {
    if pos > 31 {
        return Err(Error::BitPosition(pos));
    }
    Ok(w ^ (1u32 << pos))
}

/// Distance between `v` and its neighbour obtained by toggling the mantissa LSB.
///
/// For finite `v` this is `2^(e-23)` with `e` the unbiased exponent (or
/// `2^-149` for subnormals and zero). Returns NaN for infinities and NaNs.
pub fn ulp(v: f32) -> f64 {
    if !v.is_finite() {
        return f64::NAN;
    }
    let biased = ((v.to_bits() >> 23) & 0xff) as i32;
    let exp = if biased == 0 { -126 } else { biased - 127 };
    2f64.powi(exp - 23)
}

/// Parameter tensors whose stored words all carry even parity.
///
/// Values are the encoded floats themselves; there is no side copy of the
/// original LSBs. Instances built with [`ProtectedParams::from_stored`] may
/// hold faulty words and are expected to go through [`scrub`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProtectedParams {
    tensors: Vec<TensorF32>,
}

impl ProtectedParams {
    /// Wraps tensors that were encoded earlier (for example loaded from a
    /// protected checkpoint). Parity is not checked.
    pub fn from_stored(tensors: Vec<TensorF32>) -> Self {
        Self { tensors }
    }

    pub fn tensors(&self) -> &[TensorF32] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [TensorF32] {
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<TensorF32> {
        self.tensors
    }

    pub fn total_words(&self) -> usize {
        self.tensors.iter().map(TensorF32::len).sum()
    }

    /// Number of words currently failing the parity check.
    pub fn mismatches(&self) -> usize {
        self.tensors
            .iter()
            .flat_map(TensorF32::bits)
            .filter(|&w| !check_word(w))
            .count()
    }
}

/// Statistics about an encoding pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodeStats {
    pub total_words: usize,
    /// Words whose LSB had to be toggled.
    pub lsb_flipped: usize,
    /// Largest `|encoded - original| / ulp(original)` over finite values.
    pub max_ulp_change: f64,
    /// Largest absolute value change over finite values.
    pub max_abs_change: f64,
}

pub fn encode_tensor(t: &TensorF32) -> TensorF32 {
    TensorF32 {
        name: t.name.clone(),
        shape: t.shape.clone(),
        data: t
            .data
            .iter()
            .map(|v| f32::from_bits(encode_word(v.to_bits())))
            .collect(),
    }
}

pub fn encode_params(params: &[TensorF32]) -> ProtectedParams {
    encode_params_with_stats(params).0
}

pub fn encode_params_with_stats(params: &[TensorF32]) -> (ProtectedParams, EncodeStats) {
    let mut stats = EncodeStats::default();
    let tensors = params
        .iter()
        .map(|t| {
            let enc = encode_tensor(t);
            for (&a, &b) in t.data.iter().zip(&enc.data) {
                stats.total_words += 1;
                if a.to_bits() != b.to_bits() {
                    stats.lsb_flipped += 1;
                    if a.is_finite() && b.is_finite() {
                        let d = (f64::from(b) - f64::from(a)).abs();
                        stats.max_abs_change = stats.max_abs_change.max(d);
                        stats.max_ulp_change = stats.max_ulp_change.max(d / ulp(a));
                    }
                }
            }
            enc
        })
        .collect();
    (ProtectedParams { tensors }, stats)
}

/// Position of a masked word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WordIndex {
    pub tensor: usize,
    pub element: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScrubReport {
    pub detected: usize,
    pub detected_indices: Vec<WordIndex>,
    pub total_words: usize,
}

/// Zero-masks every odd-parity word and returns fresh tensors.
///
/// Clean words pass through untouched, parity bit included.
pub fn scrub(p: &ProtectedParams) -> (Vec<TensorF32>, ScrubReport) {
    let mut out = p.tensors.clone();
    let report = scrub_in_place(&mut out);
    (out, report)
}

pub fn scrub_in_place(tensors: &mut [TensorF32]) -> ScrubReport {
    let mut report = ScrubReport::default();
    for (ti, t) in tensors.iter_mut().enumerate() {
        report.total_words += t.data.len();
        for (ei, v) in t.data.iter_mut().enumerate() {
            if !check_word(v.to_bits()) {
                *v = 0.0;
                report.detected_indices.push(WordIndex {
                    tensor: ti,
                    element: ei,
                });
            }
        }
    }
    report.detected = report.detected_indices.len();
    report
}

/// Value a reader sees for a stored word: 0.0 if the parity check fails.
#[inline]
pub fn read_masked(v: f32) -> f32 {
    if check_word(v.to_bits()) {
        v
    } else {
        0.0
    }
}

/// Copies `src` into `dst` through [`read_masked`], leaving `src` as stored.
/// Returns the number of masked words.
pub fn read_masked_into(src: &[TensorF32], dst: &mut [TensorF32]) -> usize {
    let mut masked = 0;
    for (s, d) in src.iter().zip(dst.iter_mut()) {
        for (a, b) in s.data.iter().zip(d.data.iter_mut()) {
            *b = read_masked(*a);
            masked += usize::from(!check_word(a.to_bits()));
        }
    }
    masked
}

/// Counts parity mismatches without modifying anything; cheaper than
/// [`scrub_in_place`] when only the count matters.
pub fn count_mismatches(tensors: &[TensorF32]) -> usize {
    tensors
        .iter()
        .flat_map(TensorF32::bits)
        .filter(|&w| !check_word(w))
        .count()
}

/// Summary of where parameter magnitudes sit, used to argue that zero is a
/// safe replacement value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub max_abs: f64,
    /// `(threshold, fraction of |w| <= threshold)` pairs.
    pub abs_fractions: Vec<(f64, f64)>,
    /// Histogram over `[min, max]`: `(bin_low, bin_high, count)`.
    pub histogram: Vec<(f64, f64, usize)>,
}

pub fn distribution_report(params: &[TensorF32], bins: usize) -> DistributionReport {
    let values: Vec<f64> = params
        .iter()
        .flat_map(|t| t.data.iter().copied())
        .filter(|v| v.is_finite())
        .map(f64::from)
        .collect();
    let count = values.len();
    let bins = bins.max(1);
    if count == 0 {
        return DistributionReport {
            count,
            mean: 0.0,
            std: 0.0,
            min: 0.0,
            max: 0.0,
            max_abs: 0.0,
            abs_fractions: Vec::new(),
            histogram: Vec::new(),
        };
    }
    let mean = values.iter().sum::<f64>() / count as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_abs = min.abs().max(max.abs());

    let abs_fractions = [1e-3, 1e-2, 0.05, 0.1, 0.5, 1.0]
        .iter()
        .map(|&th| {
            let n = values.iter().filter(|v| v.abs() <= th).count();
            (th, n as f64 / count as f64)
        })
        .collect();

    let width = if max > min { (max - min) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for v in &values {
        let b = (((v - min) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (min + i as f64 * width, min + (i + 1) as f64 * width, c))
        .collect();

    DistributionReport {
        count,
        mean,
        std: var.sqrt(),
        min,
        max,
        max_abs,
        abs_fractions,
        histogram,
    }
}
