use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use segguard::calibration::{bin_predictions, ece, mce, ReliabilityBins, DEFAULT_BINS};
use segguard::segmetrics::{hard_dice, Hd95Mode, SurfaceDistances};
use segguard::spectral::DEFAULT_C;
use segguard::uncertainty::{
    classify_uncertainty, image_uncertainty, mean_prob_map, uncertainty_threshold, EnsembleProbMaps, ImageUncertainty,
};
use segguard::Error;
use serde::Serialize;
use serde_json::{json, Value};

use super::{report, Output};
use crate::args::{required, CalibArgs, SegmetricsArgs, UncertaintyArgs};
use crate::inputs::{ensemble_files, file_id, load_mask, load_mask_or_prob, load_prob};

fn dir_id(dir: &Path) -> String {
    dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn ensemble_uncertainty(dir: &Path) -> Result<ImageUncertainty> {
    let maps = ensemble_files(dir)?
        .iter()
        .map(|f| load_prob(f))
        .collect::<Result<Vec<_>>>()?;
    let ensemble = EnsembleProbMaps::new(maps).with_context(|| format!("ensemble {}", dir.display()))?;
    Ok(image_uncertainty(&mean_prob_map(&ensemble)))
}

/// Accepts a bare array of numbers or a previous `uncertainty` report.
fn read_train_scores(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let items = match &v {
        Value::Array(a) => a.clone(),
        Value::Object(o) => match o.get("scores") {
            Some(Value::Array(a)) => a.iter().map(|s| s.get("value").cloned().unwrap_or(Value::Null)).collect(),
            _ => bail!("{}: expected an array of scores or an object with \"scores\"", path.display()),
        },
        _ => bail!("{}: expected an array of scores", path.display()),
    };
    items
        .iter()
        .map(|x| x.as_f64().with_context(|| format!("{}: non-numeric score {x}", path.display())))
        .collect()
}

#[derive(Debug, Serialize)]
struct ScoreRecord {
    id: String,
    dir: PathBuf,
    value: f64,
    empty_foreground: bool,
    threshold: Option<f64>,
    is_ood: Option<bool>,
}

pub fn uncertainty(args: &UncertaintyArgs) -> Result<Output> {
    let mut a = args.clone();
    let c = *a.c.get_or_insert(DEFAULT_C);
    if a.ensemble.is_empty() {
        bail!("no --ensemble directories given");
    }
    let train: Option<Vec<f64>> = match (&a.train_scores, a.train_ensemble.is_empty()) {
        (Some(_), false) => bail!("give either --train-scores or --train-ensemble, not both"),
        (Some(p), true) => Some(read_train_scores(p)?),
        (None, false) => Some(
            a.train_ensemble
                .par_iter()
                .map(|d| ensemble_uncertainty(d).map(|u| u.value))
                .collect::<Result<_>>()?,
        ),
        (None, true) => None,
    };
    let threshold = train.as_deref().map(|t| uncertainty_threshold(t, c)).transpose()?;
    let scores = a
        .ensemble
        .par_iter()
        .map(|d| {
            let u = ensemble_uncertainty(d)?;
            let verdict = threshold.map(|t| classify_uncertainty(u.value, t));
            Ok(ScoreRecord {
                id: dir_id(d),
                dir: d.clone(),
                value: u.value,
                empty_foreground: u.empty_foreground,
                threshold,
                is_ood: verdict.map(|v| v.is_ood),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Output::Json(report(
        "uncertainty",
        &a,
        json!({ "threshold": threshold, "train_scores": train, "scores": scores }),
    )))
}

fn rates(bins: &ReliabilityBins) -> Result<(Option<f64>, Option<f64>)> {
    if bins.total() == 0 {
        return Ok((None, None));
    }
    Ok((Some(ece(bins)?), Some(mce(bins)?)))
}

fn mean_of(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn calib(args: &CalibArgs) -> Result<Output> {
    let mut a = args.clone();
    let bin_count = *a.bins.get_or_insert(DEFAULT_BINS);
    if a.prob.is_empty() {
        bail!("no --prob maps given");
    }
    if a.prob.len() != a.gt.len() {
        bail!("{} --prob maps but {} --gt masks", a.prob.len(), a.gt.len());
    }
    if !a.mask.is_empty() && a.mask.len() != a.prob.len() {
        bail!("{} --mask files for {} --prob maps", a.mask.len(), a.prob.len());
    }
    let per_image: Vec<ReliabilityBins> = (0..a.prob.len())
        .into_par_iter()
        .map(|i| {
            let p = load_prob(&a.prob[i])?;
            let gt = load_mask(&a.gt[i])?;
            let region = a.mask.get(i).map(|m| load_mask(m)).transpose()?;
            bin_predictions(&p, &gt, bin_count, region.as_ref())
                .with_context(|| format!("binning {}", a.prob[i].display()))
        })
        .collect::<Result<_>>()?;

    let mut pooled = ReliabilityBins::new(bin_count)?;
    let mut images = Vec::new();
    for (bins, path) in per_image.iter().zip(&a.prob) {
        pooled.merge(bins)?;
        let (e, m) = rates(bins)?;
        images.push(json!({ "id": file_id(path), "voxels": bins.total(), "ece": e, "mce": m }));
    }
    if pooled.total() == 0 {
        return Err(Error::EmptyInput).context("no voxels inside the --mask regions");
    }
    let (ece_pooled, mce_pooled) = rates(&pooled)?;
    let rates_per_image: Vec<_> = per_image.iter().map(rates).collect::<Result<_>>()?;
    Ok(Output::Json(report(
        "calib",
        &a,
        json!({
            "pooled": {
                "voxels": pooled.total(),
                "ece": ece_pooled,
                "mce": mce_pooled,
                "reliability": pooled.summaries(),
            },
            "per_image": images,
            "mean_per_image": {
                "ece": mean_of(rates_per_image.iter().map(|r| r.0)),
                "mce": mean_of(rates_per_image.iter().map(|r| r.1)),
            },
        }),
    )))
}

pub fn segmetrics(args: &SegmetricsArgs) -> Result<Output> {
    let mut a = args.clone();
    let mode = *a.hd95_mode.get_or_insert(Hd95Mode::default());
    let pred = load_mask_or_prob(&required(&a.pred, "pred")?)?;
    let gt = load_mask(&required(&a.gt, "gt")?)?;
    if pred.spacing() != gt.spacing() {
        bail!("spacing differs: pred {:?} mm vs gt {:?} mm", pred.spacing(), gt.spacing());
    }
    let dsc = hard_dice(&pred, &gt)?;
    let (hd95, assd, undefined) = match SurfaceDistances::between(&pred, &gt) {
        Ok(d) => (Some(d.hd95(mode)), Some(d.assd()), Value::Null),
        Err(e @ Error::EmptyMask(_)) => (None, None, json!({ "hd95_mm": e.to_string(), "assd_mm": e.to_string() })),
        Err(e) => return Err(e.into()),
    };
    Ok(Output::Json(report(
        "segmetrics",
        &a,
        json!({
            "dsc": dsc,
            "hd95_mm": hd95,
            "assd_mm": assd,
            "undefined": undefined,
            "conventions": {
                "hd95": mode.label(),
                "percentile": "linear interpolation at rank (n - 1) * 0.95",
                "surface": "foreground voxels with a background face neighbour; outside the volume counts as background",
                "distance": "voxel centres, mm",
                "spacing_mm": gt.spacing(),
            },
        }),
    )))
}
