//! MC-dropout entropy baseline.
//!
//! Consumes already-sampled probability maps; drawing dropout masks belongs to
//! whatever framework produced them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::mean_plus_c_std;
use crate::tensor::{ProbMap, Volume};

/// Number of dropout samples used by default.
pub const DEFAULT_SAMPLES: usize = 10;

/// Probability maps from repeated stochastic forward passes on one image.
#[derive(Debug, Clone)]
pub struct EnsembleProbMaps {
    maps: Vec<ProbMap>,
}

impl EnsembleProbMaps {
    pub fn new(maps: Vec<ProbMap>) -> Result<Self> {
        let first = maps.first().ok_or(Error::EmptyInput)?;
        for (i, m) in maps.iter().enumerate().skip(1) {
            if !m.volume().same_grid(first.volume()) {
                return Err(Error::ShapeMismatch(format!(
                    "ensemble member {i} has shape {:?}, spacing {:?}; expected {:?}, {:?}",
                    m.shape(),
                    m.volume().spacing(),
                    first.shape(),
                    first.volume().spacing()
                )));
            }
        }
        Ok(Self { maps })
    }

    pub fn maps(&self) -> &[ProbMap] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

/// Voxel-wise mean of the ensemble.
pub fn mean_prob_map(e: &EnsembleProbMaps) -> ProbMap {
    let first = e.maps[0].volume();
    let mut acc = vec![0.0; first.len()];
    for m in &e.maps {
        for (a, &p) in acc.iter_mut().zip(m.data()) {
            *a += p;
        }
    }
    let n = e.maps.len() as f64;
    let data = acc.into_iter().map(|s| (s / n).clamp(0.0, 1.0)).collect();
    ProbMap::new(Volume::new(first.shape(), first.spacing(), data).expect("same grid"))
        .expect("mean of probabilities is a probability")
}

/// `-p ln p`, with `0 ln 0 = 0`.
pub fn voxel_entropy(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.ln()
    }
}

pub fn entropy_map(p: &ProbMap) -> Volume {
    p.volume().map(voxel_entropy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageUncertainty {
    pub value: f64,
    /// No voxel reached 0.5; `value` is then 0 by convention.
    pub empty_foreground: bool,
}

/// Mean voxel entropy over the predicted foreground (`p >= 0.5`).
pub fn image_uncertainty(p_mean: &ProbMap) -> ImageUncertainty {
    let (sum, count) = p_mean
        .data()
        .iter()
        .filter(|&&p| p >= 0.5)
        .fold((0.0, 0usize), |(s, c), &p| (s + voxel_entropy(p), c + 1));
    if count == 0 {
        ImageUncertainty {
            value: 0.0,
            empty_foreground: true,
        }
    } else {
        ImageUncertainty {
            value: sum / count as f64,
            empty_foreground: false,
        }
    }
}

/// Same `mean + c · std` rule as the spectral threshold.
pub fn uncertainty_threshold(scores_train: &[f64], c: f64) -> Result<f64> {
    mean_plus_c_std(scores_train, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub value: f64,
    pub threshold: f64,
    pub is_ood: bool,
}

pub fn classify_uncertainty(score: f64, threshold: f64) -> UncertaintyScore {
    UncertaintyScore {
        value: score,
        threshold,
        is_ood: score > threshold,
    }
}
