//! Command-line arguments. Every subcommand's arguments double as its JSON
//! config schema: keys are the long flag names, and flags given on the
//! command line override keys from `--config`.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use segguard::segmetrics::Hd95Mode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Parser)]
#[command(name = "segguard", version, about = "Reliability checks for 3D segmentation models")]
pub struct Cli {
    /// JSON file with default values for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a signature bank from training feature tensors.
    SignatureBuild(SignatureBuildArgs),
    /// Score feature tensors against a bank.
    OodScore(OodScoreArgs),
    /// Score two labelled cohorts and write detection report, ROC and histogram.
    OodEval(OodEvalArgs),
    /// Entropy-based uncertainty scores from dropout ensembles.
    Uncertainty(UncertaintyArgs),
    /// Expected and maximum calibration error.
    Calib(CalibArgs),
    /// Dice, HD95 and ASSD between two masks.
    Segmetrics(SegmetricsArgs),
    /// Dataset sampling probabilities as CSV.
    SamplePlan(SamplePlanArgs),
    /// Sliding-window block origins as CSV.
    TilePlan(TilePlanArgs),
    /// Generate synthetic volumes or their extractor features.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SignatureBuildArgs {
    /// Feature tensors (x, y, z, channels), or directories of them.
    pub features: Vec<PathBuf>,
    /// Bank labels, one per input file; defaults to file stems.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    /// Where to write the bank.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Threshold multiplier.
    #[arg(long)]
    pub c: Option<f64>,
    /// Relative singular-value floor.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Name of the layer the features came from.
    #[arg(long)]
    pub layer_id: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct OodScoreArgs {
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Feature tensors, or directories of them.
    pub features: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct OodEvalArgs {
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Directory of in-distribution feature tensors.
    #[arg(long)]
    pub in_dist: Option<PathBuf>,
    /// Directory of out-of-distribution feature tensors.
    #[arg(long)]
    pub ood: Option<PathBuf>,
    /// Directory for report.json, roc.csv and histogram.csv.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct UncertaintyArgs {
    /// Ensemble directories holding sample_000.npy, sample_001.npy, ...
    #[arg(long, num_args = 1..)]
    pub ensemble: Vec<PathBuf>,
    /// JSON with training scores: an array of numbers, or a previous report.
    #[arg(long)]
    pub train_scores: Option<PathBuf>,
    /// Training ensemble directories (alternative to --train-scores).
    #[arg(long, num_args = 1..)]
    pub train_ensemble: Vec<PathBuf>,
    /// Threshold multiplier.
    #[arg(long)]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct CalibArgs {
    /// Probability maps.
    #[arg(long, num_args = 1.., required = false)]
    pub prob: Vec<PathBuf>,
    /// Ground-truth masks, paired with --prob in order.
    #[arg(long, num_args = 1.., required = false)]
    pub gt: Vec<PathBuf>,
    /// Optional region masks, paired with --prob in order.
    #[arg(long, num_args = 1..)]
    pub mask: Vec<PathBuf>,
    /// Number of confidence bins over [0.5, 1].
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SegmetricsArgs {
    /// Predicted mask (0/1) or probability map (binarized at 0.5).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// max-of-directed or pooled.
    #[arg(long, value_parser = parse_hd95_mode)]
    pub hd95_mode: Option<Hd95Mode>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SamplePlanArgs {
    /// Dataset as NAME=IMAGE_COUNT; repeat for each dataset.
    #[arg(long)]
    pub dataset: Vec<String>,
    /// Also draw this many datasets and report the counts.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV output path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct TilePlanArgs {
    /// Volume extent X,Y,Z.
    #[arg(long, value_delimiter = ',')]
    pub shape: Vec<usize>,
    /// Take the extent from a volume file instead.
    #[arg(long)]
    pub volume: Option<PathBuf>,
    /// Block extent: one value for a cube, or X,Y,Z.
    #[arg(long, value_delimiter = ',')]
    pub block: Vec<usize>,
    #[arg(long)]
    pub overlap: Option<usize>,
    /// CSV output path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SynthArgs {
    /// smooth-blobs or hi-freq-texture.
    #[arg(long)]
    pub family: Option<String>,
    /// Seeds as START..END or a comma list.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Volume extent X,Y,Z.
    #[arg(long, value_delimiter = ',')]
    pub shape: Vec<usize>,
    /// Write extractor features instead of volumes.
    #[arg(long)]
    pub features: bool,
    /// Extractor channel widths per stage.
    #[arg(long, value_delimiter = ',')]
    pub channels: Vec<usize>,
    #[arg(long)]
    pub extractor_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_hd95_mode(s: &str) -> std::result::Result<Hd95Mode, String> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| format!("unknown HD95 mode {s:?} (expected max-of-directed or pooled)"))
}

fn is_unset(v: &Value) -> bool {
    match v {
        Value::Null | Value::Bool(false) => true,
        Value::Array(a) => a.is_empty(),
        _ => false,
    }
}

/// Overlays flags given on the command line onto the config file's keys.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Map<String, Value>>) -> Result<T> {
    let mut merged = config.cloned().unwrap_or_default();
    let Value::Object(given) = serde_json::to_value(flags)? else {
        bail!("arguments did not serialize to an object");
    };
    for (k, v) in given {
        if !is_unset(&v) {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| anyhow::anyhow!("invalid config: {e}"))
}

pub fn read_config(path: &std::path::Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => bail!("config {} must be a JSON object", path.display()),
        Err(e) => bail!("config {} is not valid JSON: {e}", path.display()),
    }
}

pub fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().with_context(|| format!("missing required --{flag}"))
}
