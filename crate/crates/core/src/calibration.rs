//! Binned calibration metrics (ECE / MCE) for voxel-wise binary predictions.
//!
//! Each voxel contributes the confidence of its predicted class,
//! `max(p, 1 - p)`, so confidences live in `[0.5, 1]` and the bins split that
//! interval evenly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BinaryMask, ProbMap};

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BinAccumulator {
    pub count: u64,
    pub confidence_sum: f64,
    pub correct_count: u64,
}

/// Mergeable per-bin counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    bins: Vec<BinAccumulator>,
    total: u64,
}

/// One row of a reliability diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    /// Mean confidence; `None` for an empty bin.
    pub conf: Option<f64>,
    /// Fraction correct; `None` for an empty bin.
    pub acc: Option<f64>,
}

impl ReliabilityBins {
    pub fn new(bin_count: usize) -> Result<Self> {
        if bin_count == 0 {
            return Err(Error::InvalidArgument("bin count must be at least 1".into()));
        }
        Ok(Self {
            bins: vec![BinAccumulator::default(); bin_count],
            total: 0,
        })
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn bins(&self) -> &[BinAccumulator] {
        &self.bins
    }

    /// Bin of a confidence in `[0.5, 1]`; the top edge falls in the last bin.
    pub fn bin_index(&self, confidence: f64) -> usize {
        let b = self.bins.len();
        let idx = ((confidence - 0.5) * b as f64 / 0.5).floor();
        if idx < 0.0 {
            0
        } else {
            (idx as usize).min(b - 1)
        }
    }

    /// Records one prediction given the foreground probability and the truth.
    pub fn add(&mut self, p: f64, truth: bool) {
        let predicted = p >= 0.5;
        let confidence = p.max(1.0 - p);
        let i = self.bin_index(confidence);
        let bin = &mut self.bins[i];
        bin.count += 1;
        bin.confidence_sum += confidence;
        bin.correct_count += u64::from(predicted == truth);
        self.total += 1;
    }

    /// Adds another set of counters with the same bin layout.
    pub fn merge(&mut self, other: &ReliabilityBins) -> Result<()> {
        if other.bins.len() != self.bins.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot merge {} bins into {}",
                other.bins.len(),
                self.bins.len()
            )));
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.count += b.count;
            a.confidence_sum += b.confidence_sum;
            a.correct_count += b.correct_count;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn summaries(&self) -> Vec<BinSummary> {
        let width = 0.5 / self.bins.len() as f64;
        self.bins
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let (conf, acc) = if b.count == 0 {
                    (None, None)
                } else {
                    let n = b.count as f64;
                    (Some(b.confidence_sum / n), Some(b.correct_count as f64 / n))
                };
                BinSummary {
                    lo: 0.5 + i as f64 * width,
                    hi: 0.5 + (i + 1) as f64 * width,
                    count: b.count,
                    conf,
                    acc,
                }
            })
            .collect()
    }

    fn gaps(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.bins.iter().filter(|b| b.count > 0).map(|b| {
            let n = b.count as f64;
            (b.count, (b.correct_count as f64 / n - b.confidence_sum / n).abs())
        })
    }
}

/// Bins every voxel, or only voxels where `region` is set.
pub fn bin_predictions(
    p: &ProbMap,
    gt: &BinaryMask,
    bin_count: usize,
    region: Option<&BinaryMask>,
) -> Result<ReliabilityBins> {
    if p.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(format!(
            "probability map {:?} vs ground truth {:?}",
            p.shape(),
            gt.shape()
        )));
    }
    if let Some(r) = region {
        if r.shape() != gt.shape() {
            return Err(Error::ShapeMismatch(format!(
                "region mask {:?} vs ground truth {:?}",
                r.shape(),
                gt.shape()
            )));
        }
    }
    let mut bins = ReliabilityBins::new(bin_count)?;
    for (i, (&prob, &truth)) in p.data().iter().zip(gt.data()).enumerate() {
        if region.is_none_or(|r| r.data()[i]) {
            bins.add(prob, truth);
        }
    }
    Ok(bins)
}

/// Count-weighted mean of `|acc - conf|` over bins.
pub fn ece(bins: &ReliabilityBins) -> Result<f64> {
    if bins.total == 0 {
        return Err(Error::EmptyInput);
    }
    let n = bins.total as f64;
    Ok(bins.gaps().map(|(c, gap)| c as f64 / n * gap).sum())
}

/// Largest `|acc - conf|` over non-empty bins.
pub fn mce(bins: &ReliabilityBins) -> Result<f64> {
    if bins.total == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(bins.gaps().map(|(_, gap)| gap).fold(0.0, f64::max))
}
