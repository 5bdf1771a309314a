//! Deterministic synthetic data and a fixed random-weight feature extractor.
//!
//! These stand in for real images and a trained network so the OOD and
//! calibration pipelines can run end to end. The extractor is untrained; it
//! only has to preserve gross distributional differences between families.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::tensor::{flat_index, BinaryMask, FeatureMap, ProbMap, Volume};
use crate::uncertainty::EnsembleProbMaps;

/// Smallest extent per axis accepted by `gen_volume`; matches the default
/// extractor's four stride-2 stages.
pub const MIN_SYNTH_EXTENT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Sum of random 3D Gaussian bumps (low spatial frequency).
    SmoothBlobs,
    /// Random-period checkerboard plus noise (high spatial frequency).
    HiFreqTexture,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::SmoothBlobs => "smooth-blobs",
            Family::HiFreqTexture => "hi-freq-texture",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth-blobs" => Ok(Family::SmoothBlobs),
            "hi-freq-texture" => Ok(Family::HiFreqTexture),
            other => Err(Error::InvalidArgument(format!("unknown family {other:?}"))),
        }
    }
}

fn family_seed(family: Family, seed: u64) -> u64 {
    let tag = match family {
        Family::SmoothBlobs => 0x5EED_B10B,
        Family::HiFreqTexture => 0x5EED_7E47,
    };
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag
}

fn rescale_unit(data: &mut [f64]) {
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for v in data.iter_mut() {
        *v = if span > 0.0 { ((*v - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
    }
}

/// Synthetic volume with unit spacing and voxels in `[0, 1]`.
pub fn gen_volume(family: Family, shape: [usize; 3], seed: u64) -> Result<Volume> {
    if shape.iter().any(|&s| s < MIN_SYNTH_EXTENT) {
        return Err(Error::ShapeTooSmall(shape.to_vec()));
    }
    let mut rng = Stream::new(family_seed(family, seed));
    let [nx, ny, nz] = shape;
    let mut data = vec![0.0; nx * ny * nz];
    match family {
        Family::SmoothBlobs => {
            let min_dim = *shape.iter().min().unwrap() as f64;
            let blobs = 4 + rng.below(5) as usize;
            let params: Vec<([f64; 3], f64, f64)> = (0..blobs)
                .map(|_| {
                    let c = [
                        rng.range(0.0, nx as f64),
                        rng.range(0.0, ny as f64),
                        rng.range(0.0, nz as f64),
                    ];
                    let sigma = rng.range(min_dim / 10.0, min_dim / 5.0);
                    let amp = rng.range(0.5, 1.0);
                    (c, sigma, amp)
                })
                .collect();
            for x in 0..nx {
                for y in 0..ny {
                    for z in 0..nz {
                        let p = [x as f64, y as f64, z as f64];
                        data[flat_index(shape, x, y, z)] = params
                            .iter()
                            .map(|(c, s, a)| {
                                let d2: f64 = (0..3).map(|i| (p[i] - c[i]).powi(2)).sum();
                                a * (-d2 / (2.0 * s * s)).exp()
                            })
                            .sum();
                    }
                }
            }
        }
        Family::HiFreqTexture => {
            let period: Vec<usize> = (0..3).map(|_| 1 + rng.below(3) as usize).collect();
            let phase: Vec<usize> = (0..3).map(|_| rng.below(4) as usize).collect();
            for x in 0..nx {
                for y in 0..ny {
                    for z in 0..nz {
                        let cell = (x + phase[0]) / period[0]
                            + (y + phase[1]) / period[1]
                            + (z + phase[2]) / period[2];
                        let checker = (cell % 2) as f64;
                        data[flat_index(shape, x, y, z)] = 0.7 * checker + 0.3 * rng.uniform();
                    }
                }
            }
        }
    }
    rescale_unit(&mut data);
    Volume::new(shape, [1.0; 3], data)
}

/// Mean absolute forward difference over all three axes.
pub fn mean_abs_gradient(v: &Volume) -> f64 {
    let [nx, ny, nz] = v.shape();
    let mut sum = 0.0;
    let mut n = 0usize;
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let c = v.get(x, y, z);
                if x + 1 < nx {
                    sum += (v.get(x + 1, y, z) - c).abs();
                    n += 1;
                }
                if y + 1 < ny {
                    sum += (v.get(x, y + 1, z) - c).abs();
                    n += 1;
                }
                if z + 1 < nz {
                    sum += (v.get(x, y, z + 1) - c).abs();
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Random-weight CNN: per stage a 3×3×3 convolution with stride 2 and zero
/// bias. Hidden stages apply ReLU; the last stage is read out before the
/// activation, since rectified outputs on a handful of voxels leave whole
/// channels at exactly zero.
///
/// Each stage maps an extent `e` to `floor(e / 2)`. Output voxel `i` reads
/// input voxels `2i - 1 ..= 2i + 1`; index `-1` is zero padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorSpec {
    /// Output channels of each stage; the last entry is the feature width.
    pub channels: Vec<usize>,
    pub seed: u64,
}

impl Default for ExtractorSpec {
    fn default() -> Self {
        Self {
            channels: vec![8, 16, 16, 14],
            seed: 0,
        }
    }
}

impl ExtractorSpec {
    pub fn stage_count(&self) -> usize {
        self.channels.len()
    }

    pub fn output_shape(&self, input: [usize; 3]) -> [usize; 3] {
        input.map(|e| e >> self.stage_count())
    }

    fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "extractor channels {:?} must be non-empty and positive",
                self.channels
            )));
        }
        if *self.channels.last().unwrap() < 2 {
            return Err(Error::InvalidArgument("extractor needs at least 2 output channels".into()));
        }
        Ok(())
    }
}

/// Extractor with materialized weights.
#[derive(Debug, Clone)]
pub struct Extractor {
    spec: ExtractorSpec,
    /// Per stage, layout `[out][kx][ky][kz][in]`.
    weights: Vec<Vec<f64>>,
}

impl Extractor {
    pub fn new(spec: ExtractorSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = Stream::new(spec.seed);
        let mut c_in = 1;
        let mut weights = Vec::with_capacity(spec.channels.len());
        for &c_out in &spec.channels {
            let fan_in = 27 * c_in;
            let a = 1.0 / (fan_in as f64).sqrt();
            weights.push((0..c_out * fan_in).map(|_| rng.range(-a, a)).collect());
            c_in = c_out;
        }
        Ok(Self { spec, weights })
    }

    pub fn spec(&self) -> &ExtractorSpec {
        &self.spec
    }

    pub fn extract(&self, v: &Volume) -> Result<FeatureMap> {
        let out = self.spec.output_shape(v.shape());
        if out.contains(&0) {
            return Err(Error::ShapeTooSmall(v.shape().to_vec()));
        }
        let mut shape = v.shape();
        let mut c_in = 1;
        let mut act = v.data().to_vec();
        for (stage, &c_out) in self.spec.channels.iter().enumerate() {
            let relu = stage + 1 < self.spec.channels.len();
            let (next_shape, next) = conv_stride2(&act, shape, c_in, &self.weights[stage], c_out, relu);
            act = next;
            shape = next_shape;
            c_in = c_out;
        }
        FeatureMap::new(shape, c_in, act)
    }
}

fn conv_stride2(
    input: &[f64],
    shape: [usize; 3],
    c_in: usize,
    weights: &[f64],
    c_out: usize,
    relu: bool,
) -> ([usize; 3], Vec<f64>) {
    let out_shape = shape.map(|e| e / 2);
    let [ox, oy, oz] = out_shape;
    let mut out = vec![0.0; ox * oy * oz * c_out];
    let mut patch = vec![0.0; 27 * c_in];
    for x in 0..ox {
        for y in 0..oy {
            for z in 0..oz {
                let mut p = 0;
                for kx in 0..3 {
                    for ky in 0..3 {
                        for kz in 0..3 {
                            let (ix, iy, iz) = (2 * x + kx, 2 * y + ky, 2 * z + kz);
                            // shift by one for the leading zero pad
                            let inside = ix >= 1 && iy >= 1 && iz >= 1;
                            let base = inside
                                .then(|| (ix - 1, iy - 1, iz - 1))
                                .filter(|&(a, b, c)| a < shape[0] && b < shape[1] && c < shape[2])
                                .map(|(a, b, c)| flat_index(shape, a, b, c) * c_in);
                            for ci in 0..c_in {
                                patch[p] = base.map_or(0.0, |b| input[b + ci]);
                                p += 1;
                            }
                        }
                    }
                }
                let o = flat_index(out_shape, x, y, z) * c_out;
                for co in 0..c_out {
                    let w = &weights[co * patch.len()..(co + 1) * patch.len()];
                    let s: f64 = w.iter().zip(&patch).map(|(a, b)| a * b).sum();
                    out[o + co] = if relu { s.max(0.0) } else { s };
                }
            }
        }
    }
    (out_shape, out)
}

pub fn extract_features(v: &Volume, spec: &ExtractorSpec) -> Result<FeatureMap> {
    Extractor::new(spec.clone())?.extract(v)
}

/// Probability map whose per-bin accuracy trails confidence by `target_ece`.
///
/// Each voxel draws a confidence uniformly in `(0.5, 1]`, is predicted
/// correctly with probability `confidence - target_ece`, and reports
/// `p = confidence` for a foreground prediction or `1 - confidence` otherwise.
pub fn gen_calibrated_predictor(gt: &BinaryMask, target_ece: f64, seed: u64) -> Result<ProbMap> {
    if !(0.0..=0.4).contains(&target_ece) {
        return Err(Error::InvalidArgument(format!(
            "target ECE {target_ece} outside [0, 0.4]"
        )));
    }
    let mut rng = Stream::new(seed);
    let data = gt
        .data()
        .iter()
        .map(|&truth| {
            let conf = 1.0 - 0.5 * rng.uniform();
            let correct = rng.uniform() < conf - target_ece;
            let predicted_fg = if correct { truth } else { !truth };
            if predicted_fg {
                conf
            } else {
                1.0 - conf
            }
        })
        .collect();
    ProbMap::new(Volume::new(gt.shape(), gt.spacing(), data)?)
}

/// Ensemble standing in for MC-dropout samples of a segmentation of `v`:
/// member `k` is `logistic(8 (v - 0.5) + noise_k)` with voxel-wise uniform
/// noise in `[-noise, noise]`.
pub fn gen_dropout_ensemble(v: &Volume, samples: usize, noise: f64, seed: u64) -> Result<EnsembleProbMaps> {
    if samples == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = Stream::new(seed);
    let maps = (0..samples)
        .map(|_| {
            let data = v
                .data()
                .iter()
                .map(|&x| {
                    let logit = 8.0 * (x - 0.5) + rng.range(-noise, noise);
                    1.0 / (1.0 + (-logit).exp())
                })
                .collect();
            ProbMap::new(Volume::new(v.shape(), v.spacing(), data)?)
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleProbMaps::new(maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volumes_are_deterministic_and_bounded() {
        for family in [Family::SmoothBlobs, Family::HiFreqTexture] {
            let a = gen_volume(family, [16, 18, 20], 3).unwrap();
            assert_eq!(a, gen_volume(family, [16, 18, 20], 3).unwrap());
            assert_ne!(a, gen_volume(family, [16, 18, 20], 4).unwrap());
            assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert!(matches!(
            gen_volume(Family::SmoothBlobs, [8, 16, 16], 0),
            Err(Error::ShapeTooSmall(_))
        ));
    }

    #[test]
    fn blobs_are_smoother_than_texture() {
        for seed in 0..5 {
            let b = gen_volume(Family::SmoothBlobs, [24; 3], seed).unwrap();
            let t = gen_volume(Family::HiFreqTexture, [24; 3], seed).unwrap();
            assert!(mean_abs_gradient(&b) < mean_abs_gradient(&t));
        }
    }

    #[test]
    fn extractor_output_shape() {
        let v = gen_volume(Family::SmoothBlobs, [48; 3], 1).unwrap();
        let f = extract_features(&v, &ExtractorSpec::default()).unwrap();
        assert_eq!(f.spatial(), [3, 3, 3]);
        assert_eq!(f.channels(), 14);
        assert_eq!(f, extract_features(&v, &ExtractorSpec::default()).unwrap());
    }

    #[test]
    fn extractor_is_seeded() {
        let v = gen_volume(Family::HiFreqTexture, [32; 3], 2).unwrap();
        let a = extract_features(&v, &ExtractorSpec::default()).unwrap();
        let spec = ExtractorSpec { seed: 1, ..ExtractorSpec::default() };
        assert_ne!(a, extract_features(&v, &spec).unwrap());
        // the readout is linear, so features take both signs
        assert!(a.data().iter().any(|&x| x < 0.0) && a.data().iter().any(|&x| x > 0.0));
    }

    #[test]
    fn zero_volume_gives_zero_features() {
        let v = Volume::filled([32; 3], [1.0; 3], 0.0).unwrap();
        let f = extract_features(&v, &ExtractorSpec::default()).unwrap();
        assert!(f.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn extractor_rejects_tiny_input() {
        let v = Volume::filled([8, 32, 32], [1.0; 3], 0.5).unwrap();
        assert!(matches!(
            extract_features(&v, &ExtractorSpec::default()),
            Err(Error::ShapeTooSmall(_))
        ));
    }

    #[test]
    fn calibrated_predictor_is_reproducible() {
        let gt = BinaryMask::new([4, 4, 4], [1.0; 3], (0..64).map(|i| i % 3 == 0).collect()).unwrap();
        let a = gen_calibrated_predictor(&gt, 0.1, 9).unwrap();
        assert_eq!(a, gen_calibrated_predictor(&gt, 0.1, 9).unwrap());
        assert!(gen_calibrated_predictor(&gt, 0.5, 9).is_err());
    }
}
