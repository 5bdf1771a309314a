use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use segguard::detect::{evaluate, roc_curve, LabeledScores};
use segguard::spectral::{
    bank_build, classify, signature_from_feature_map, BankConfig, SignatureBank, DEFAULT_C, DEFAULT_EPSILON_FLOOR,
};
use segguard::stats::{freedman_diaconis_layout, histogram};
use serde::Serialize;
use serde_json::json;

use super::{report, Output};
use crate::args::{required, OodEvalArgs, OodScoreArgs, SignatureBuildArgs};
use crate::inputs::{expand, file_id, load_features, npy_files, write_text};

pub fn signature_build(args: &SignatureBuildArgs) -> Result<Output> {
    let mut a = args.clone();
    let cfg = BankConfig {
        c_multiplier: *a.c.get_or_insert(DEFAULT_C),
        epsilon_floor: *a.eps.get_or_insert(DEFAULT_EPSILON_FLOOR),
    };
    let out = required(&a.out, "out")?;
    let files = expand(&a.features)?;
    if files.len() < 2 {
        bail!("need at least 2 feature files, got {}", files.len());
    }
    if a.labels.is_empty() {
        a.labels = files.iter().map(|f| file_id(f)).collect();
    } else if a.labels.len() != files.len() {
        bail!("{} labels for {} feature files", a.labels.len(), files.len());
    }
    let maps = files.par_iter().map(|f| load_features(f)).collect::<Result<Vec<_>>>()?;
    let mut bank = bank_build(&maps, &a.labels, cfg)?;
    if let Some(layer) = &a.layer_id {
        bank = bank.with_layer_id(layer.clone());
    }
    bank.save(&out)?;
    log::info!("bank with {} entries written to {}", bank.len(), out.display());
    Ok(Output::Json(report(
        "signature-build",
        &a,
        json!({
            "bank": out,
            "entries": bank.len(),
            "signature_length": bank.signature_length(),
            "tau": bank.tau(),
            "labels": bank.labels(),
            "oodm_train": bank.oodm_train(),
        }),
    )))
}

#[derive(Debug, Serialize)]
struct Verdict {
    id: String,
    file: PathBuf,
    oodm: f64,
    tau: f64,
    is_ood: bool,
    nearest: String,
}

fn score_files(bank: &SignatureBank, files: &[PathBuf]) -> Result<Vec<Verdict>> {
    files
        .par_iter()
        .map(|f| {
            let id = file_id(f);
            let fm = load_features(f)?;
            let v = signature_from_feature_map(&fm, bank.config(), id.clone())
                .and_then(|sig| classify(&sig, bank))
                .with_context(|| format!("scoring {}", f.display()))?;
            Ok(Verdict {
                id,
                file: f.clone(),
                oodm: v.oodm,
                tau: v.tau,
                is_ood: v.is_ood,
                nearest: v.nearest_neighbor_id,
            })
        })
        .collect()
}

fn load_bank(path: &Path) -> Result<SignatureBank> {
    SignatureBank::load(path).with_context(|| format!("loading bank {}", path.display()))
}

pub fn ood_score(args: &OodScoreArgs) -> Result<Output> {
    let bank = load_bank(&required(&args.bank, "bank")?)?;
    let files = expand(&args.features)?;
    if files.is_empty() {
        bail!("no feature files given");
    }
    let verdicts = score_files(&bank, &files)?;
    Ok(Output::Json(report("ood-score", args, json!({ "verdicts": verdicts }))))
}

fn cohort_files(dir: &Path, flag: &str) -> Result<Vec<PathBuf>> {
    let files = npy_files(dir)?;
    if files.is_empty() {
        bail!("--{flag} directory {} holds no .npy files", dir.display());
    }
    Ok(files)
}

pub fn ood_eval(args: &OodEvalArgs) -> Result<Output> {
    let bank = load_bank(&required(&args.bank, "bank")?)?;
    let in_files = cohort_files(&required(&args.in_dist, "in-dist")?, "in-dist")?;
    let ood_files = cohort_files(&required(&args.ood, "ood")?, "ood")?;
    let out_dir = required(&args.out_dir, "out-dir")?;

    let in_scores = score_files(&bank, &in_files)?;
    let ood_scores = score_files(&bank, &ood_files)?;
    let a: Vec<f64> = in_scores.iter().map(|v| v.oodm).collect();
    let b: Vec<f64> = ood_scores.iter().map(|v| v.oodm).collect();
    let labeled = LabeledScores::from_cohorts(&a, &b)?;
    let detection = evaluate(&labeled, bank.tau())?;

    let mut roc = String::from("fpr,tpr\n");
    for (fpr, tpr) in roc_curve(&labeled)? {
        writeln!(roc, "{fpr},{tpr}")?;
    }
    let (lo, width, bins) = freedman_diaconis_layout(labeled.scores())?;
    let mut hist = String::from("lo,hi,count,cohort\n");
    for (cohort, values) in [("in_dist", &a), ("ood", &b)] {
        for bin in histogram(values, lo, width, bins) {
            writeln!(hist, "{},{},{},{cohort}", bin.lo, bin.hi, bin.count)?;
        }
    }
    let roc_path = out_dir.join("roc.csv");
    let hist_path = out_dir.join("histogram.csv");
    let report_path = out_dir.join("report.json");
    write_text(&roc_path, &roc)?;
    write_text(&hist_path, &hist)?;

    let body = report(
        "ood-eval",
        args,
        json!({
            "detection": detection,
            "histogram": { "rule": "freedman-diaconis", "lo": lo, "width": width, "bins": bins },
            "outputs": { "report": report_path, "roc": roc_path, "histogram": hist_path },
            "in_dist": in_scores,
            "ood": ood_scores,
        }),
    );
    write_text(&report_path, &serde_json::to_string_pretty(&body)?)?;
    Ok(Output::Json(body))
}
