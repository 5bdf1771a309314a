use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use segguard::npy;
use segguard::sampling::{sample_dataset, sampling_plan, DatasetCatalog};
use segguard::synth::{gen_volume, Extractor, ExtractorSpec, Family};
use segguard::tiling::{tiling_origins, DEFAULT_BLOCK, DEFAULT_OVERLAP};
use serde_json::json;

use super::{report, Output};
use crate::args::{required, SamplePlanArgs, SynthArgs, TilePlanArgs};
use crate::inputs::{load_volume, write_text};

/// Writes the CSV to `--out` (or returns it for stdout) and the JSON report
/// to `--report` when given.
fn emit(csv: String, out: &Option<std::path::PathBuf>, report_path: &Option<std::path::PathBuf>, body: serde_json::Value) -> Result<Output> {
    if let Some(p) = report_path {
        write_text(p, &serde_json::to_string_pretty(&body)?)?;
    }
    match out {
        Some(p) => {
            write_text(p, &csv)?;
            Ok(Output::Json(body))
        }
        None => Ok(Output::Text(csv)),
    }
}

fn parse_dataset(spec: &str) -> Result<(String, u64)> {
    let (name, n) = spec
        .rsplit_once('=')
        .with_context(|| format!("dataset {spec:?} is not NAME=COUNT"))?;
    let n = n.trim().parse().with_context(|| format!("dataset {spec:?}: bad image count"))?;
    Ok((name.trim().to_string(), n))
}

pub fn sample_plan(args: &SamplePlanArgs) -> Result<Output> {
    let mut a = args.clone();
    let pairs = a.dataset.iter().map(|d| parse_dataset(d)).collect::<Result<Vec<_>>>()?;
    let plan = sampling_plan(&DatasetCatalog::from_pairs(pairs)?);
    let mut csv = String::from("dataset,n,prob\n");
    for row in &plan.rows {
        writeln!(csv, "{},{},{}", row.dataset, row.n, row.probability)?;
    }
    let draws = a.draws.map(|k| {
        let seed = *a.seed.get_or_insert(0);
        let picks = sample_dataset(&plan, seed, k);
        plan.rows
            .iter()
            .map(|r| json!({ "dataset": r.dataset, "count": picks.iter().filter(|p| **p == r.dataset).count() }))
            .collect::<Vec<_>>()
    });
    let body = report("sample-plan", &a, json!({ "rows": plan.rows, "draws": draws }));
    emit(csv, &a.out, &a.report, body)
}

fn triple(v: &[usize], flag: &str) -> Result<[usize; 3]> {
    match *v {
        [n] => Ok([n; 3]),
        [x, y, z] => Ok([x, y, z]),
        _ => bail!("--{flag} takes 1 or 3 values, got {}", v.len()),
    }
}

pub fn tile_plan(args: &TilePlanArgs) -> Result<Output> {
    let mut a = args.clone();
    let shape = match (&a.volume, a.shape.is_empty()) {
        (Some(_), false) => bail!("give either --shape or --volume, not both"),
        (Some(p), true) => load_volume(p)?.shape(),
        (None, false) => match *a.shape {
            [x, y, z] => [x, y, z],
            _ => bail!("--shape takes 3 values, got {}", a.shape.len()),
        },
        (None, true) => bail!("missing required --shape or --volume"),
    };
    if a.block.is_empty() {
        a.block = DEFAULT_BLOCK.to_vec();
    }
    let block = triple(&a.block, "block")?;
    let overlap = *a.overlap.get_or_insert(DEFAULT_OVERLAP);
    let plan = tiling_origins(shape, block, overlap)?;
    let mut csv = String::from("x,y,z\n");
    for [x, y, z] in &plan.origins {
        writeln!(csv, "{x},{y},{z}")?;
    }
    let body = report("tile-plan", &a, json!({ "volume_shape": shape, "blocks": plan.origins.len(), "origins": plan.origins }));
    emit(csv, &a.out, &a.report, body)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: u64 = lo.trim().parse().with_context(|| format!("bad seed range {s:?}"))?;
        let hi: u64 = hi.trim().parse().with_context(|| format!("bad seed range {s:?}"))?;
        if hi <= lo {
            bail!("empty seed range {s:?}");
        }
        return Ok((lo..hi).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse().with_context(|| format!("bad seed {x:?}")))
        .collect()
}

pub fn synth(args: &SynthArgs) -> Result<Output> {
    let mut a = args.clone();
    let family: Family = required(&a.family, "family")?.parse()?;
    let seeds = parse_seeds(&required(&a.seeds, "seeds")?)?;
    if a.shape.is_empty() {
        a.shape = vec![64; 3];
    }
    let shape = match *a.shape {
        [x, y, z] => [x, y, z],
        _ => bail!("--shape takes 3 values, got {}", a.shape.len()),
    };
    let defaults = ExtractorSpec::default();
    if a.channels.is_empty() {
        a.channels = defaults.channels.clone();
    }
    let spec = ExtractorSpec {
        channels: a.channels.clone(),
        seed: *a.extractor_seed.get_or_insert(defaults.seed),
    };
    let extractor = if a.features { Some(Extractor::new(spec)?) } else { None };
    let dir = required(&a.out, "out")?.join(family.name());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let files = seeds
        .par_iter()
        .map(|&seed| {
            let v = gen_volume(family, shape, seed)?;
            let tensor = match &extractor {
                Some(ex) => ex.extract(&v)?.to_tensor(),
                None => v.to_tensor(),
            };
            let path = dir.join(format!("{seed}.npy"));
            npy::save_tensor(&tensor, &path)?;
            Ok(path)
        })
        .collect::<Result<Vec<_>>>()?;
    log::info!("wrote {} files to {}", files.len(), dir.display());
    Ok(Output::Json(report(
        "synth",
        &a,
        json!({ "kind": if a.features { "features" } else { "volume" }, "files": files }),
    )))
}
