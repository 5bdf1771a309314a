//! Multi-dataset sampling probabilities.
//!
//! Each image of a dataset with `n` images gets weight `1/√n`, so the
//! probability of drawing from dataset `k` is `√n_k / Σ_j √n_j`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub n_images: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetCatalog {
    entries: Vec<DatasetEntry>,
}

impl DatasetCatalog {
    pub fn new(entries: Vec<DatasetEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if e.n_images == 0 {
                return Err(Error::InvalidArgument(format!("dataset {:?} has no images", e.name)));
            }
            if !seen.insert(e.name.as_str()) {
                return Err(Error::DuplicateLabel(e.name.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, u64)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(name, n_images)| DatasetEntry {
                    name: name.into(),
                    n_images,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRow {
    pub dataset: String,
    pub n: u64,
    pub probability: f64,
    pub per_image_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub rows: Vec<SamplingRow>,
}

impl SamplingPlan {
    pub fn probabilities(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.probability).collect()
    }
}

pub fn sampling_plan(catalog: &DatasetCatalog) -> SamplingPlan {
    let masses: Vec<f64> = catalog
        .entries
        .iter()
        .map(|e| e.n_images as f64 * (1.0 / (e.n_images as f64).sqrt()))
        .collect();
    let z: f64 = masses.iter().sum();
    SamplingPlan {
        rows: catalog
            .entries
            .iter()
            .zip(&masses)
            .map(|(e, &m)| SamplingRow {
                dataset: e.name.clone(),
                n: e.n_images,
                probability: m / z,
                per_image_weight: 1.0 / (e.n_images as f64).sqrt(),
            })
            .collect(),
    }
}

/// Seeded draws of dataset names by inverse CDF on the plan.
pub fn sample_dataset(plan: &SamplingPlan, seed: u64, draws: usize) -> Vec<String> {
    let mut cumulative = Vec::with_capacity(plan.rows.len());
    let mut acc = 0.0;
    for r in &plan.rows {
        acc += r.probability;
        cumulative.push(acc);
    }
    let mut rng = Stream::new(seed);
    (0..draws)
        .map(|_| {
            let u = rng.uniform() * acc;
            let k = cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(plan.rows.len() - 1);
            plan.rows[k].dataset.clone()
        })
        .collect()
}
