//! Sample statistics and normal-approximation confidence intervals.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two samples.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 || xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Two-sided standard-normal quantile: `z` with `P(|Z| <= z) = confidence`.
pub fn z_two_sided(confidence: f64) -> f64 {
    let n = Normal::standard();
    n.inverse_cdf(0.5 + confidence / 2.0)
}

/// Half-width of the normal-approximation interval `mean ± z·s/√n`.
pub fn ci_half_width(xs: &[f64], confidence: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    z_two_sided(confidence) * sample_std(xs) / (xs.len() as f64).sqrt()
}

/// Number of samples needed for a `half_width` interval at `confidence`,
/// using the current sample spread: `ceil((z·s/E)²)`.
pub fn required_iterations(samples: &[f64], confidence: f64, half_width: f64) -> usize {
    let s = sample_std(samples);
    let n = (z_two_sided(confidence) * s / half_width).powi(2).ceil();
    if n.is_finite() {
        n as usize
    } else {
        usize::MAX
    }
}
