//! Loading tensor files and writing outputs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use segguard::npy;
use segguard::{BinaryMask, FeatureMap, ProbMap, Volume};

const DEFAULT_SPACING: [f64; 3] = [1.0, 1.0, 1.0];

/// Expands directories into their `.npy` files (sorted by name); plain files
/// pass through in the given order.
pub fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(npy_files(p)?);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn npy_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()
        .with_context(|| format!("listing {}", dir.display()))?;
    files.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "npy"));
    files.sort();
    Ok(files)
}

/// File name without the `.npy` extension.
pub fn file_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn load_volume(path: &Path) -> Result<Volume> {
    let t = npy::load_tensor(path).with_context(|| format!("reading {}", path.display()))?;
    if t.spacing().is_none() {
        log::warn!("{}: no spacing sidecar, assuming 1 mm isotropic", path.display());
    }
    Volume::from_tensor(&t, Some(DEFAULT_SPACING)).with_context(|| format!("loading volume {}", path.display()))
}

pub fn load_prob(path: &Path) -> Result<ProbMap> {
    ProbMap::new(load_volume(path)?).with_context(|| format!("loading probability map {}", path.display()))
}

pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    BinaryMask::from_volume(&load_volume(path)?).with_context(|| format!("loading mask {}", path.display()))
}

/// Accepts exact 0/1 masks; other maps in [0, 1] are binarized at 0.5.
pub fn load_mask_or_prob(path: &Path) -> Result<BinaryMask> {
    let v = load_volume(path)?;
    if let Ok(m) = BinaryMask::from_volume(&v) {
        return Ok(m);
    }
    let p = ProbMap::new(v).with_context(|| format!("{} is neither a mask nor a probability map", path.display()))?;
    log::info!("{}: binarizing probability map at 0.5", path.display());
    Ok(p.binarize())
}

pub fn load_features(path: &Path) -> Result<FeatureMap> {
    let t = npy::load_tensor(path).with_context(|| format!("reading {}", path.display()))?;
    FeatureMap::from_tensor(&t).with_context(|| format!("loading feature map {}", path.display()))
}

/// Ensemble members `sample_000.npy`, `sample_001.npy`, ... in order.
pub fn ensemble_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let files: Vec<PathBuf> = npy_files(dir)?
        .into_iter()
        .filter(|p| file_id(p).starts_with("sample_"))
        .collect();
    if files.is_empty() {
        bail!("{}: no sample_*.npy files", dir.display());
    }
    for (i, f) in files.iter().enumerate() {
        let expected = format!("sample_{i:03}");
        if file_id(f) != expected {
            bail!("{}: expected {expected}.npy, found {}", dir.display(), f.display());
        }
    }
    Ok(files)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
