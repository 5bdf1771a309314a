//! Brute-force oracles and random-input helpers shared by the integration
//! tests. Nothing here calls the code paths it is used to check.
#![allow(dead_code)]

use segguard::rng::Stream;
use segguard::{BinaryMask, FeatureMap};

pub fn idx(shape: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    (x * shape[1] + y) * shape[2] + z
}

/// Foreground voxels with a background (or out-of-bounds) face neighbor.
pub fn surface_oracle(m: &BinaryMask) -> Vec<[usize; 3]> {
    let s = m.shape();
    let d = m.data();
    let on = |x: i64, y: i64, z: i64| {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < s[0]
            && (y as usize) < s[1]
            && (z as usize) < s[2]
            && d[idx(s, x as usize, y as usize, z as usize)]
    };
    let mut out = Vec::new();
    for x in 0..s[0] as i64 {
        for y in 0..s[1] as i64 {
            for z in 0..s[2] as i64 {
                if !on(x, y, z) {
                    continue;
                }
                let nb = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)];
                if nb.iter().any(|&(a, b, c)| !on(x + a, y + b, z + c)) {
                    out.push([x as usize, y as usize, z as usize]);
                }
            }
        }
    }
    out
}

pub fn mm_distance(a: [usize; 3], b: [usize; 3], spacing: [f64; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        let d = (a[i] as f64 - b[i] as f64) * spacing[i];
        s += d * d;
    }
    s.sqrt()
}

/// Exhaustive nearest-seed distance for every voxel of the grid.
pub fn edt_oracle(seeds: &[[usize; 3]], shape: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; shape.iter().product()];
    for x in 0..shape[0] {
        for y in 0..shape[1] {
            for z in 0..shape[2] {
                let best = seeds
                    .iter()
                    .map(|&s| mm_distance([x, y, z], s, spacing))
                    .fold(f64::INFINITY, f64::min);
                out[idx(shape, x, y, z)] = best;
            }
        }
    }
    out
}

pub fn directed_oracle(from: &[[usize; 3]], to: &[[usize; 3]], spacing: [f64; 3]) -> Vec<f64> {
    from.iter()
        .map(|&a| to.iter().map(|&b| mm_distance(a, b, spacing)).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Linear-interpolation percentile, rank `(n - 1) q`.
pub fn percentile_oracle(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = (v.len() - 1) as f64 * q;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

/// Mann-Whitney pair count: P(pos > neg) + 0.5 P(tie).
pub fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Random non-empty mask built from a few boxes and ellipsoids plus
/// scattered voxels.
pub fn random_mask(shape: [usize; 3], spacing: [f64; 3], rng: &mut Stream) -> BinaryMask {
    let mut data = vec![false; shape.iter().product()];
    let shapes = 1 + rng.below(3);
    for _ in 0..shapes {
        let c: Vec<f64> = shape.iter().map(|&n| rng.range(0.0, n as f64)).collect();
        let r: Vec<f64> = shape.iter().map(|&n| rng.range(1.0, n as f64 / 3.0)).collect();
        let ellipsoid = rng.below(2) == 0;
        for x in 0..shape[0] {
            for y in 0..shape[1] {
                for z in 0..shape[2] {
                    let p = [x as f64, y as f64, z as f64];
                    let inside = if ellipsoid {
                        (0..3).map(|i| ((p[i] - c[i]) / r[i]).powi(2)).sum::<f64>() <= 1.0
                    } else {
                        (0..3).all(|i| (p[i] - c[i]).abs() <= r[i])
                    };
                    if inside {
                        data[idx(shape, x, y, z)] = true;
                    }
                }
            }
        }
    }
    for _ in 0..rng.below(6) {
        let i = rng.below(data.len() as u64) as usize;
        data[i] = true;
    }
    let i = rng.below(data.len() as u64) as usize;
    data[i] = true;
    BinaryMask::new(shape, spacing, data).unwrap()
}

pub fn random_feature_map(spatial: [usize; 3], channels: usize, rng: &mut Stream) -> FeatureMap {
    let n = spatial.iter().product::<usize>() * channels;
    FeatureMap::new(spatial, channels, (0..n).map(|_| rng.range(-1.0, 1.0)).collect()).unwrap()
}
