//! End-to-end runs of the `segguard` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use segguard::calibration::{bin_predictions, ece, mce};
use segguard::npy::save_tensor;
use segguard::segmetrics::{hard_dice, Hd95Mode, SurfaceDistances};
use segguard::spectral::{bank_build, BankConfig, SignatureBank};
use segguard::synth::{extract_features, gen_calibrated_predictor, gen_volume, ExtractorSpec, Family};
use segguard::uncertainty::{image_uncertainty, mean_prob_map, EnsembleProbMaps};
use segguard::{BinaryMask, FeatureMap, ProbMap, Tensor, Volume};
use serde_json::Value;
use tempfile::TempDir;

fn segguard(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segguard"))
        .args(args)
        .current_dir(dir)
        .env_remove("SEGGUARD_THREADS")
        .output()
        .expect("binary runs")
}

fn ok_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn save_features(path: &Path, f: &FeatureMap) {
    save_tensor(&f.to_tensor(), path).unwrap();
}

fn random_features(seed: u64, channels: usize) -> FeatureMap {
    let mut rng = segguard::rng::Stream::new(seed);
    let data = (0..27 * channels).map(|_| rng.range(-1.0, 1.0)).collect();
    FeatureMap::new([3, 3, 3], channels, data).unwrap()
}

/// Writes `<dir>/<name>/<seed>.npy` extractor features and returns the maps.
fn synth_features(dir: &Path, name: &str, family: Family, seeds: std::ops::Range<u64>) -> Vec<FeatureMap> {
    std::fs::create_dir_all(dir.join(name)).unwrap();
    seeds
        .map(|s| {
            let f = extract_features(&gen_volume(family, [32; 3], s).unwrap(), &ExtractorSpec::default()).unwrap();
            save_features(&dir.join(name).join(format!("{s:03}.npy")), &f);
            f
        })
        .collect()
}

#[test]
fn identical_training_files_give_zero_tau() {
    let tmp = TempDir::new().unwrap();
    let f = random_features(1, 5);
    save_features(&tmp.path().join("a.npy"), &f);
    save_features(&tmp.path().join("b.npy"), &f);
    let r = ok_json(&segguard(&["signature-build", "a.npy", "b.npy", "--out", "bank.json"], tmp.path()));
    assert_eq!(r["tau"], 0.0);
    assert_eq!(r["command"], "signature-build");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["config"]["c"], 2.5);
}

#[test]
fn single_training_file_is_rejected() {
    let tmp = TempDir::new().unwrap();
    save_features(&tmp.path().join("a.npy"), &random_features(1, 5));
    let out = segguard(&["signature-build", "a.npy", "--out", "bank.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("need at least 2"));
}

#[test]
fn bank_matches_library_bit_for_bit() {
    let tmp = TempDir::new().unwrap();
    let maps = synth_features(tmp.path(), "train", Family::SmoothBlobs, 0..20);
    ok_json(&segguard(&["signature-build", "train", "--out", "bank.json"], tmp.path()));
    let cli_bank = SignatureBank::load(tmp.path().join("bank.json")).unwrap();
    let labels: Vec<String> = (0..20).map(|s| format!("{s:03}")).collect();
    let lib_bank = bank_build(&maps, &labels, BankConfig::default()).unwrap();
    assert_eq!(cli_bank.tau().to_bits(), lib_bank.tau().to_bits());
    assert_eq!(cli_bank.labels(), lib_bank.labels());
    assert_eq!(cli_bank.signatures(), lib_bank.signatures());
}

#[test]
fn scoring_member_and_order() {
    let tmp = TempDir::new().unwrap();
    for i in 0..4 {
        save_features(&tmp.path().join(format!("t{i}.npy")), &random_features(i, 6));
    }
    ok_json(&segguard(&["signature-build", "t0.npy", "t1.npy", "t2.npy", "t3.npy", "--out", "bank.json"], tmp.path()));
    let r = ok_json(&segguard(&["ood-score", "--bank", "bank.json", "t2.npy", "t0.npy", "t3.npy"], tmp.path()));
    let v = r["verdicts"].as_array().unwrap();
    let ids: Vec<&str> = v.iter().map(|x| x["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["t2", "t0", "t3"]);
    assert_eq!(v[0]["oodm"], 0.0);
    assert_eq!(v[0]["is_ood"], false);
    assert_eq!(v[0]["nearest"], "t2");
}

#[test]
fn channel_mismatch_names_the_file() {
    let tmp = TempDir::new().unwrap();
    save_features(&tmp.path().join("a.npy"), &random_features(1, 6));
    save_features(&tmp.path().join("b.npy"), &random_features(2, 6));
    save_features(&tmp.path().join("odd.npy"), &random_features(3, 4));
    ok_json(&segguard(&["signature-build", "a.npy", "b.npy", "--out", "bank.json"], tmp.path()));
    let out = segguard(&["ood-score", "--bank", "bank.json", "a.npy", "odd.npy"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("odd.npy"), "{}", stderr(&out));
}

#[test]
fn non_finite_features_are_numerical_failures() {
    let tmp = TempDir::new().unwrap();
    save_features(&tmp.path().join("a.npy"), &random_features(1, 6));
    save_features(&tmp.path().join("b.npy"), &random_features(2, 6));
    let mut data = random_features(3, 6).data().to_vec();
    data[5] = f64::NAN;
    save_features(&tmp.path().join("nan.npy"), &FeatureMap::new([3, 3, 3], 6, data).unwrap());
    ok_json(&segguard(&["signature-build", "a.npy", "b.npy", "--out", "bank.json"], tmp.path()));
    let out = segguard(&["ood-score", "--bank", "bank.json", "nan.npy"], tmp.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn missing_input_is_an_io_failure() {
    let tmp = TempDir::new().unwrap();
    let out = segguard(&["ood-score", "--bank", "nope.json", "x.npy"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let out = segguard(&["segmetrics", "--pred", "p.npy", "--gt", "g.npy"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ood_eval_writes_report_roc_and_histogram() {
    let tmp = TempDir::new().unwrap();
    synth_features(tmp.path(), "train", Family::SmoothBlobs, 0..10);
    synth_features(tmp.path(), "ind", Family::SmoothBlobs, 100..106);
    synth_features(tmp.path(), "ood", Family::HiFreqTexture, 200..206);
    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    ok_json(&segguard(&["signature-build", "train", "--out", "bank.json"], tmp.path()));

    let r = ok_json(&segguard(
        &["ood-eval", "--bank", "bank.json", "--in-dist", "ind", "--ood", "ood", "--out-dir", "e1"],
        tmp.path(),
    ));
    let swapped = ok_json(&segguard(
        &["ood-eval", "--bank", "bank.json", "--in-dist", "ood", "--ood", "ind", "--out-dir", "e2"],
        tmp.path(),
    ));
    let auc = r["detection"]["auc"].as_f64().unwrap();
    let auc2 = swapped["detection"]["auc"].as_f64().unwrap();
    assert!((auc + auc2 - 1.0).abs() < 1e-12);

    let roc = std::fs::read_to_string(tmp.path().join("e1/roc.csv")).unwrap();
    assert!(roc.starts_with("fpr,tpr\n0,0\n"));
    assert!(roc.trim_end().ends_with("1,1"));
    let hist = std::fs::read_to_string(tmp.path().join("e1/histogram.csv")).unwrap();
    let mut lines = hist.lines();
    assert_eq!(lines.next(), Some("lo,hi,count,cohort"));
    let counted: usize = lines.map(|l| l.split(',').nth(2).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(counted, 12);
    let saved: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("e1/report.json")).unwrap()).unwrap();
    assert_eq!(saved, r);

    let out = segguard(
        &["ood-eval", "--bank", "bank.json", "--in-dist", "ind", "--ood", "empty", "--out-dir", "e3"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = TempDir::new().unwrap();
    for i in 0..12 {
        save_features(&tmp.path().join(format!("f{i:02}.npy")), &random_features(i, 5));
    }
    ok_json(&segguard(&["signature-build", ".", "--out", "bank.json"], tmp.path()));
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_segguard"))
            .args(["ood-score", "--bank", "bank.json", "."])
            .current_dir(tmp.path())
            .env("SEGGUARD_THREADS", threads)
            .output()
            .unwrap()
    };
    let one = run("1");
    assert!(one.status.success());
    assert_eq!(one.stdout, run("4").stdout);
    assert_eq!(run("lots").status.code(), Some(2));
}

fn save_volume(path: &Path, v: &Volume) {
    save_tensor(&v.to_tensor(), path).unwrap();
}

fn ball(shape: [usize; 3], spacing: [f64; 3], c: [f64; 3], r: f64) -> BinaryMask {
    let mut d = Vec::new();
    for x in 0..shape[0] {
        for y in 0..shape[1] {
            for z in 0..shape[2] {
                let p = [x as f64 - c[0], y as f64 - c[1], z as f64 - c[2]];
                d.push(p.iter().map(|v| v * v).sum::<f64>() <= r * r);
            }
        }
    }
    BinaryMask::new(shape, spacing, d).unwrap()
}

#[test]
fn segmetrics_matches_library() {
    let tmp = TempDir::new().unwrap();
    let sp = [0.5, 1.0, 2.0];
    let a = ball([20, 20, 12], sp, [9.0, 9.0, 6.0], 5.0);
    let b = ball([20, 20, 12], sp, [10.0, 8.0, 6.0], 4.0);
    save_volume(&tmp.path().join("pred.npy"), &a.to_volume());
    save_volume(&tmp.path().join("gt.npy"), &b.to_volume());
    let d = SurfaceDistances::between(&a, &b).unwrap();
    for (flag, mode) in [("max-of-directed", Hd95Mode::MaxOfDirected), ("pooled", Hd95Mode::Pooled)] {
        let r = ok_json(&segguard(
            &["segmetrics", "--pred", "pred.npy", "--gt", "gt.npy", "--hd95-mode", flag],
            tmp.path(),
        ));
        assert_eq!(r["dsc"].as_f64().unwrap(), hard_dice(&a, &b).unwrap());
        assert_eq!(r["hd95_mm"].as_f64().unwrap(), d.hd95(mode));
        assert_eq!(r["assd_mm"].as_f64().unwrap(), d.assd());
        assert_eq!(r["conventions"]["hd95"], flag);
    }
}

#[test]
fn empty_mask_metrics_are_undefined() {
    let tmp = TempDir::new().unwrap();
    let a = ball([8, 8, 8], [1.0; 3], [4.0; 3], 2.0);
    save_volume(&tmp.path().join("pred.npy"), &a.to_volume());
    save_volume(&tmp.path().join("gt.npy"), &Volume::filled([8, 8, 8], [1.0; 3], 0.0).unwrap());
    let r = ok_json(&segguard(&["segmetrics", "--pred", "pred.npy", "--gt", "gt.npy"], tmp.path()));
    assert_eq!(r["dsc"], 0.0);
    assert!(r["hd95_mm"].is_null());
    assert!(r["assd_mm"].is_null());
    assert!(r["undefined"]["hd95_mm"].is_string());
}

#[test]
fn missing_spacing_defaults_to_one_mm_with_a_warning() {
    let tmp = TempDir::new().unwrap();
    let a = ball([8, 8, 8], [1.0; 3], [4.0; 3], 2.0);
    let t = Tensor::from_f64(vec![8, 8, 8], a.to_volume().into_data()).unwrap();
    save_tensor(&t, tmp.path().join("pred.npy")).unwrap();
    save_tensor(&t, tmp.path().join("gt.npy")).unwrap();
    let out = segguard(&["segmetrics", "--pred", "pred.npy", "--gt", "gt.npy"], tmp.path());
    let r = ok_json(&out);
    assert_eq!(r["conventions"]["spacing_mm"], serde_json::json!([1.0, 1.0, 1.0]));
    assert!(stderr(&out).contains("assuming 1 mm"));
}

#[test]
fn calib_pooled_and_per_image() {
    let tmp = TempDir::new().unwrap();
    let gts = [ball([20; 3], [1.0; 3], [10.0; 3], 6.0), ball([20; 3], [1.0; 3], [8.0; 3], 4.0)];
    let probs = [
        gen_calibrated_predictor(&gts[0], 0.0, 1).unwrap(),
        gen_calibrated_predictor(&gts[1], 0.2, 2).unwrap(),
    ];
    for i in 0..2 {
        save_volume(&tmp.path().join(format!("p{i}.npy")), probs[i].volume());
        save_volume(&tmp.path().join(format!("g{i}.npy")), &gts[i].to_volume());
    }
    let r = ok_json(&segguard(
        &["calib", "--prob", "p0.npy", "p1.npy", "--gt", "g0.npy", "g1.npy", "--bins", "15"],
        tmp.path(),
    ));
    let mut pooled = bin_predictions(&probs[0], &gts[0], 15, None).unwrap();
    let second = bin_predictions(&probs[1], &gts[1], 15, None).unwrap();
    let e1 = ece(&second).unwrap();
    pooled.merge(&second).unwrap();
    assert_eq!(r["config"]["bins"], 15);
    assert_eq!(r["pooled"]["ece"].as_f64().unwrap(), ece(&pooled).unwrap());
    assert_eq!(r["pooled"]["mce"].as_f64().unwrap(), mce(&pooled).unwrap());
    assert_eq!(r["pooled"]["reliability"].as_array().unwrap().len(), 15);
    assert_eq!(r["per_image"][1]["ece"].as_f64().unwrap(), e1);
    assert!(r["mean_per_image"]["ece"].is_number());
    let out = segguard(&["calib", "--prob", "p0.npy", "--gt", "g0.npy", "g1.npy"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

fn write_ensemble(dir: &Path, maps: &[ProbMap]) {
    std::fs::create_dir_all(dir).unwrap();
    for (i, m) in maps.iter().enumerate() {
        save_volume(&dir.join(format!("sample_{i:03}.npy")), m.volume());
    }
}

#[test]
fn uncertainty_scores_match_library() {
    let tmp = TempDir::new().unwrap();
    let v = gen_volume(Family::SmoothBlobs, [16; 3], 4).unwrap();
    let e = segguard::synth::gen_dropout_ensemble(&v, 4, 1.0, 9).unwrap();
    write_ensemble(&tmp.path().join("case"), e.maps());
    let zero = ProbMap::new(Volume::filled([4; 3], [1.0; 3], 0.0).unwrap()).unwrap();
    write_ensemble(&tmp.path().join("blank"), &[zero.clone(), zero]);
    std::fs::write(tmp.path().join("train.json"), "[0.1, 0.2, 0.3]").unwrap();

    let r = ok_json(&segguard(
        &["uncertainty", "--ensemble", "case", "blank", "--train-scores", "train.json"],
        tmp.path(),
    ));
    let want = image_uncertainty(&mean_prob_map(&EnsembleProbMaps::new(e.maps().to_vec()).unwrap()));
    assert_eq!(r["threshold"], 0.45);
    assert_eq!(r["scores"][0]["id"], "case");
    assert_eq!(r["scores"][0]["value"].as_f64().unwrap(), want.value);
    assert_eq!(r["scores"][1]["empty_foreground"], true);
    assert_eq!(r["scores"][1]["value"], 0.0);

    std::fs::write(tmp.path().join("prev.json"), serde_json::to_string(&r).unwrap()).unwrap();
    let again = ok_json(&segguard(
        &["uncertainty", "--ensemble", "case", "--train-scores", "prev.json"],
        tmp.path(),
    ));
    assert!(again["threshold"].is_number());

    std::fs::rename(tmp.path().join("case/sample_001.npy"), tmp.path().join("case/sample_005.npy")).unwrap();
    let out = segguard(&["uncertainty", "--ensemble", "case"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plans_as_csv() {
    let tmp = TempDir::new().unwrap();
    let out = segguard(&["sample-plan", "--dataset", "small=10", "--dataset", "large=100"], tmp.path());
    let csv = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "dataset,n,prob");
    let p: f64 = rows[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!((p - 0.24).abs() < 0.005);

    let out = segguard(&["tile-plan", "--shape", "168,96,200"], tmp.path());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv, "x,y,z\n0,0,0\n0,0,72\n0,0,104\n72,0,0\n72,0,72\n72,0,104\n");
    let out = segguard(&["tile-plan", "--shape", "50,96,96"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("cfg.json"), r#"{"shape": [10, 10, 10], "block": [6], "overlap": 3}"#).unwrap();
    let r = ok_json(&segguard(
        &["--config", "cfg.json", "tile-plan", "--overlap", "2", "--out", "o.csv"],
        tmp.path(),
    ));
    assert_eq!(r["config"]["overlap"], 2);
    assert_eq!(r["config"]["block"], serde_json::json!([6]));
    assert_eq!(r["origins"].as_array().unwrap().len(), 8);
    assert!(std::fs::read_to_string(tmp.path().join("o.csv")).unwrap().starts_with("x,y,z\n0,0,0\n0,0,4\n"));

    std::fs::write(tmp.path().join("bad.json"), r#"{"shapes": [10, 10, 10]}"#).unwrap();
    let out = segguard(&["--config", "bad.json", "tile-plan"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("shapes"));
}

#[test]
fn synth_layout() {
    let tmp = TempDir::new().unwrap();
    let r = ok_json(&segguard(
        &["synth", "--family", "hi-freq-texture", "--seeds", "3,5", "--shape", "16,16,16", "--out", "s"],
        tmp.path(),
    ));
    assert_eq!(r["kind"], "volume");
    let p: PathBuf = tmp.path().join("s/hi-freq-texture/5.npy");
    let t = segguard::npy::load_tensor(&p).unwrap();
    assert_eq!(t.to_f64(), gen_volume(Family::HiFreqTexture, [16; 3], 5).unwrap().data());
    ok_json(&segguard(
        &["synth", "--family", "smooth-blobs", "--seeds", "0..2", "--shape", "16,16,16", "--features", "--out", "s"],
        tmp.path(),
    ));
    let f = segguard::npy::load_tensor(tmp.path().join("s/smooth-blobs/1.npy")).unwrap();
    assert_eq!(f.shape(), &[1, 1, 1, 14]);
    let out = segguard(&["synth", "--family", "plaid", "--seeds", "0", "--out", "s"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}
