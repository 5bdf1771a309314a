//! Small descriptive statistics shared by several modules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard deviation dividing by `n` (image statistics).
pub fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Standard deviation dividing by `n - 1`. Needs at least two values.
pub fn sample_std(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            found: xs.len(),
        });
    }
    let m = mean(xs);
    Ok((xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

/// Detection threshold `mean + c * std` with the sample standard deviation.
///
/// Shared by the spectral OOD measure and the uncertainty baseline.
pub fn mean_plus_c_std(values: &[f64], c: f64) -> Result<f64> {
    let std = sample_std(values)?;
    Ok(mean(values) + c * std)
}

/// Percentile with linear interpolation between order statistics at rank
/// `(n - 1) * q`. `q` is a fraction in `[0, 1]`.
pub fn percentile_linear(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Bin width by the Freedman–Diaconis rule, `2 * IQR / n^(1/3)`.
///
/// Falls back to a single bin when the IQR is zero.
pub fn freedman_diaconis_width(values: &[f64]) -> Result<f64> {
    let q1 = percentile_linear(values, 0.25)?;
    let q3 = percentile_linear(values, 0.75)?;
    Ok(2.0 * (q3 - q1) / (values.len() as f64).cbrt())
}

/// Fixed-width histogram starting at `lo`. Out-of-range values land in the
/// end bins, so the last bin is closed on the right.
pub fn histogram(values: &[f64], lo: f64, width: f64, bins: usize) -> Vec<HistogramBin> {
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = ((v - lo) / width).floor();
        let idx = if idx < 0.0 { 0 } else { (idx as usize).min(bins - 1) };
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            count,
        })
        .collect()
}

/// Bin layout `(lo, width, bins)` covering all values with Freedman–Diaconis width.
pub fn freedman_diaconis_layout(values: &[f64]) -> Result<(f64, f64, usize)> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = freedman_diaconis_width(values)?;
    let span = hi - lo;
    if width.is_nan() || width <= 0.0 || span <= 0.0 {
        let width = if span > 0.0 { span } else { 1.0 };
        return Ok((lo, width, 1));
    }
    let bins = ((span / width).ceil() as usize).max(1);
    Ok((lo, width, bins))
}
