//! Browser bindings for a few segguard operations. Each export takes plain
//! numbers or text and returns a JSON string for the page to render.

use segguard::calibration::{bin_predictions, ece, mce};
use segguard::sampling::{sampling_plan, DatasetCatalog};
use segguard::synth::gen_calibrated_predictor;
use segguard::tiling::tiling_origins;
use segguard::BinaryMask;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Parses `name=count` entries separated by newlines or commas.
pub fn sampling_report(catalog: &str) -> Result<String, String> {
    let pairs = catalog
        .split([',', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let (name, n) = entry
                .rsplit_once('=')
                .ok_or_else(|| format!("{entry:?} is not name=count"))?;
            let n: u64 = n.trim().parse().map_err(|_| format!("{entry:?}: bad count"))?;
            Ok((name.trim().to_string(), n))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let catalog = DatasetCatalog::from_pairs(pairs).map_err(|e| e.to_string())?;
    Ok(json!({ "rows": sampling_plan(&catalog).rows }).to_string())
}

pub fn tiling_report(shape: [usize; 3], block: usize, overlap: usize) -> Result<String, String> {
    let plan = tiling_origins(shape, [block; 3], overlap).map_err(|e| e.to_string())?;
    let coverage = plan.coverage();
    let max = coverage.iter().copied().max().unwrap_or(0);
    Ok(json!({
        "volume_shape": shape,
        "block": block,
        "origins": plan.origins,
        "max_coverage": max,
    })
    .to_string())
}

/// Reliability diagram of a synthetic predictor with the given miscalibration
/// on a 40^3 ball mask.
pub fn reliability_report(target_ece: f64, bins: usize, seed: u64) -> Result<String, String> {
    let n = 40;
    let c = (n as f64 - 1.0) / 2.0;
    let mut data = Vec::with_capacity(n * n * n);
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let d2 = [x, y, z].iter().map(|&i| (i as f64 - c).powi(2)).sum::<f64>();
                data.push(d2 <= 144.0);
            }
        }
    }
    let gt = BinaryMask::new([n; 3], [1.0; 3], data).map_err(|e| e.to_string())?;
    let p = gen_calibrated_predictor(&gt, target_ece, seed).map_err(|e| e.to_string())?;
    let b = bin_predictions(&p, &gt, bins, None).map_err(|e| e.to_string())?;
    Ok(json!({
        "ece": ece(&b).map_err(|e| e.to_string())?,
        "mce": mce(&b).map_err(|e| e.to_string())?,
        "bins": b.summaries(),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn sampling_plan_json(catalog: &str) -> Result<String, JsError> {
    sampling_report(catalog).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn tiling_plan_json(x: usize, y: usize, z: usize, block: usize, overlap: usize) -> Result<String, JsError> {
    tiling_report([x, y, z], block, overlap).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn reliability_json(target_ece: f64, bins: usize, seed: u32) -> Result<String, JsError> {
    reliability_report(target_ece, bins, seed as u64).map_err(|e| JsError::new(&e))
}
