//! Spectral-signature out-of-distribution detection.
//!
//! A feature map `(w, h, d, n)` is reshaped to a `(w·h·d) × n` matrix; its
//! singular values, log-transformed and scaled to unit ℓ2 norm, form the
//! image's signature. The OOD measure of a test image is the Euclidean
//! distance from its signature to the nearest training signature, and an
//! image is declared OOD when that distance exceeds
//! `τ = mean + C · std` of the leave-one-out training distances.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::mean_plus_c_std;
use crate::svd::singular_values;
use crate::tensor::FeatureMap;

pub const DEFAULT_C: f64 = 2.5;
pub const DEFAULT_EPSILON_FLOOR: f64 = 1e-12;
const UNIT_NORM_TOL: f64 = 1e-9;
const DEGENERATE_NORM: f64 = 1e-12;
const BANK_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    pub c_multiplier: f64,
    /// Relative floor applied to singular values before the log.
    pub epsilon_floor: f64,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            c_multiplier: DEFAULT_C,
            epsilon_floor: DEFAULT_EPSILON_FLOOR,
        }
    }
}

impl BankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_multiplier >= 0.0 && self.c_multiplier.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "c_multiplier must be >= 0, got {}",
                self.c_multiplier
            )));
        }
        if !(self.epsilon_floor > 0.0 && self.epsilon_floor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon_floor must be > 0, got {}",
                self.epsilon_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSignature {
    pub values: Vec<f64>,
    pub source_id: String,
}

impl SpectralSignature {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodVerdict {
    pub oodm: f64,
    pub tau: f64,
    pub is_ood: bool,
    pub nearest_neighbor_id: String,
}

/// Singular values of the reshaped `(w·h·d) × n` feature matrix, descending.
pub fn compute_spectrum(f: &FeatureMap) -> Result<Vec<f64>> {
    singular_values(f.data(), f.voxels(), f.channels())
}

/// Log-spectrum normalized to unit ℓ2 norm.
pub fn signature_from_spectrum(
    spectrum: &[f64],
    cfg: &BankConfig,
    source_id: impl Into<String>,
) -> Result<SpectralSignature> {
    let source_id = source_id.into();
    let degenerate = |id: &str| Error::DegenerateSpectrum {
        label: (!id.is_empty()).then(|| id.to_string()),
    };
    let largest = spectrum.first().copied().unwrap_or(0.0);
    if largest.is_nan() || largest <= 0.0 {
        return Err(degenerate(&source_id));
    }
    let floor = cfg.epsilon_floor * largest;
    let logs: Vec<f64> = spectrum.iter().map(|&s| s.max(floor).ln()).collect();
    let norm = logs.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm.is_nan() || norm < DEGENERATE_NORM {
        return Err(degenerate(&source_id));
    }
    Ok(SpectralSignature {
        values: logs.iter().map(|x| x / norm).collect(),
        source_id,
    })
}

pub fn signature_from_feature_map(
    f: &FeatureMap,
    cfg: &BankConfig,
    source_id: impl Into<String>,
) -> Result<SpectralSignature> {
    signature_from_spectrum(&compute_spectrum(f)?, cfg, source_id)
}

/// `mean + c · std` with the sample (n − 1) standard deviation.
pub fn threshold_tau(oodm_train: &[f64], c: f64) -> Result<f64> {
    mean_plus_c_std(oodm_train, c)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Index and distance of the nearest row, skipping `exclude`. Ties go to the
/// lowest index.
fn nearest(rows: &[Vec<f64>], query: &[f64], exclude: Option<usize>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        let d = distance(row, query);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

/// Training signatures and the calibrated threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureBank {
    signatures: Vec<Vec<f64>>,
    labels: Vec<String>,
    oodm_train: Vec<f64>,
    tau: f64,
    config: BankConfig,
    signature_length: usize,
    layer_id: String,
}

#[derive(Serialize, Deserialize)]
struct BankFile {
    version: u32,
    layer_id: String,
    config: BankConfig,
    signature_length: usize,
    labels: Vec<String>,
    signatures: Vec<Vec<f64>>,
    oodm_train: Vec<f64>,
    tau: f64,
    std_convention: String,
}

impl SignatureBank {
    /// Builds a bank from precomputed signatures (leave-one-out OODM, then τ).
    pub fn from_signatures(signatures: Vec<SpectralSignature>, cfg: BankConfig) -> Result<Self> {
        cfg.validate()?;
        if signatures.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                found: signatures.len(),
            });
        }
        check_unique(signatures.iter().map(|s| s.source_id.as_str()))?;
        let signature_length = signatures[0].len();
        if let Some(bad) = signatures.iter().find(|s| s.len() != signature_length) {
            return Err(Error::InconsistentChannels {
                label: bad.source_id.clone(),
                expected: signature_length,
                found: bad.len(),
            });
        }
        let (labels, rows): (Vec<String>, Vec<Vec<f64>>) =
            signatures.into_iter().map(|s| (s.source_id, s.values)).unzip();
        let oodm_train: Vec<f64> = (0..rows.len())
            .map(|i| nearest(&rows, &rows[i], Some(i)).expect("at least two rows").1)
            .collect();
        let tau = threshold_tau(&oodm_train, cfg.c_multiplier)?;
        Ok(Self {
            signatures: rows,
            labels,
            oodm_train,
            tau,
            config: cfg,
            signature_length,
            layer_id: String::new(),
        })
    }

    pub fn with_layer_id(mut self, layer_id: impl Into<String>) -> Self {
        self.layer_id = layer_id.into();
        self
    }

    pub fn signatures(&self) -> &[Vec<f64>] {
        &self.signatures
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn oodm_train(&self) -> &[f64] {
        &self.oodm_train
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn config(&self) -> &BankConfig {
        &self.config
    }

    pub fn signature_length(&self) -> usize {
        self.signature_length
    }

    pub fn layer_id(&self) -> &str {
        &self.layer_id
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = BankFile {
            version: BANK_VERSION,
            layer_id: self.layer_id.clone(),
            config: self.config,
            signature_length: self.signature_length,
            labels: self.labels.clone(),
            signatures: self.signatures.clone(),
            oodm_train: self.oodm_train.clone(),
            tau: self.tau,
            std_convention: "sample".into(),
        };
        serde_json::to_string_pretty(&file).expect("bank serializes")
    }

    /// Parses and re-validates a persisted bank, including that `tau` matches
    /// the stored training distances.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: BankFile = serde_json::from_str(text)
            .map_err(|e| Error::MalformedFile(format!("signature bank: {e}")))?;
        let bad = |msg: String| Error::MalformedFile(format!("signature bank: {msg}"));
        if file.version != BANK_VERSION {
            return Err(bad(format!("unsupported version {}", file.version)));
        }
        if file.std_convention != "sample" {
            return Err(bad(format!("unsupported std convention {:?}", file.std_convention)));
        }
        file.config.validate()?;
        let k = file.signatures.len();
        if k < 2 {
            return Err(Error::InsufficientData { needed: 2, found: k });
        }
        if file.labels.len() != k || file.oodm_train.len() != k {
            return Err(bad("labels, signatures and oodm_train differ in length".into()));
        }
        check_unique(file.labels.iter().map(String::as_str))?;
        for (row, label) in file.signatures.iter().zip(&file.labels) {
            if row.len() != file.signature_length {
                return Err(bad(format!("signature {label:?} has length {}", row.len())));
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(bad(format!("signature {label:?} is not unit norm ({norm})")));
            }
        }
        let tau = threshold_tau(&file.oodm_train, file.config.c_multiplier)?;
        if tau.to_bits() != file.tau.to_bits() {
            return Err(bad(format!("tau {} does not match oodm_train ({tau})", file.tau)));
        }
        Ok(Self {
            signatures: file.signatures,
            labels: file.labels,
            oodm_train: file.oodm_train,
            tau: file.tau,
            config: file.config,
            signature_length: file.signature_length,
            layer_id: file.layer_id,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn check_unique<'a>(labels: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(Error::DuplicateLabel(l.to_string()));
        }
    }
    Ok(())
}

/// Builds a bank from one feature map per training image.
pub fn bank_build(
    feature_maps: &[FeatureMap],
    labels: &[String],
    cfg: BankConfig,
) -> Result<SignatureBank> {
    cfg.validate()?;
    if feature_maps.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature maps but {} labels",
            feature_maps.len(),
            labels.len()
        )));
    }
    if feature_maps.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            found: feature_maps.len(),
        });
    }
    check_unique(labels.iter().map(String::as_str))?;
    let channels = feature_maps[0].channels();
    for (f, label) in feature_maps.iter().zip(labels) {
        if f.channels() != channels {
            return Err(Error::InconsistentChannels {
                label: label.clone(),
                expected: channels,
                found: f.channels(),
            });
        }
    }
    let signatures = feature_maps
        .iter()
        .zip(labels)
        .map(|(f, label)| signature_from_feature_map(f, &cfg, label.clone()))
        .collect::<Result<Vec<_>>>()?;
    SignatureBank::from_signatures(signatures, cfg)
}

/// Distance to the nearest bank signature and that signature's label.
pub fn oodm(test: &SpectralSignature, bank: &SignatureBank) -> Result<(f64, String)> {
    if test.len() != bank.signature_length {
        return Err(Error::LengthMismatch {
            expected: bank.signature_length,
            found: test.len(),
        });
    }
    let (idx, d) = nearest(&bank.signatures, &test.values, None).expect("bank is non-empty");
    Ok((d, bank.labels[idx].clone()))
}

/// OOD iff `oodm > tau` (a distance equal to `tau` is in-distribution).
pub fn classify(test: &SpectralSignature, bank: &SignatureBank) -> Result<OodVerdict> {
    let (value, nearest_neighbor_id) = oodm(test, bank)?;
    Ok(OodVerdict {
        oodm: value,
        tau: bank.tau,
        is_ood: value > bank.tau,
        nearest_neighbor_id,
    })
}
