//! Exact Euclidean distance transform on anisotropic 3D grids.
//!
//! Separable lower-envelope algorithm (Felzenszwalb & Huttenlocher): one pass
//! of 1-D squared-distance transforms per axis, each linear in the line
//! length. Distances are in mm and measured between voxel centers.

use crate::error::{Error, Result};
use crate::tensor::{flat_index, Volume};

/// Squared distances (mm²) from every voxel to the nearest seed voxel.
///
/// `seeds` is a row-major indicator over `shape`. Returns `Err(EmptySurface)`
/// when no seed is set.
pub fn squared_edt(seeds: &[bool], shape: [usize; 3], spacing: [f64; 3]) -> Result<Vec<f64>> {
    assert_eq!(seeds.len(), shape.iter().product::<usize>());
    if !seeds.iter().any(|&s| s) {
        return Err(Error::EmptySurface);
    }
    let mut f: Vec<f64> = seeds
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();

    let longest = *shape.iter().max().unwrap();
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut scratch = Envelope::with_capacity(longest);

    for axis in 0..3 {
        let w2 = spacing[axis] * spacing[axis];
        let n = shape[axis];
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for i in 0..shape[o1] {
            for j in 0..shape[o2] {
                let index = |k: usize| {
                    let mut c = [0usize; 3];
                    c[axis] = k;
                    c[o1] = i;
                    c[o2] = j;
                    flat_index(shape, c[0], c[1], c[2])
                };
                for k in 0..n {
                    line[k] = f[index(k)];
                }
                scratch.transform(&line[..n], w2, &mut out[..n]);
                for k in 0..n {
                    f[index(k)] = out[k];
                }
            }
        }
    }
    Ok(f)
}

struct Envelope {
    vertices: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            vertices: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    /// `out[q] = min_p f[p] + w2 (q - p)^2`; infinite entries never enter the
    /// envelope, and an all-infinite line stays infinite.
    fn transform(&mut self, f: &[f64], w2: f64, out: &mut [f64]) {
        self.vertices.clear();
        self.bounds.clear();
        let height = |p: usize| f[p] + w2 * (p as f64) * (p as f64);
        for (q, &fq) in f.iter().enumerate() {
            if !fq.is_finite() {
                continue;
            }
            loop {
                let Some(&v) = self.vertices.last() else {
                    self.vertices.push(q);
                    self.bounds.push(f64::NEG_INFINITY);
                    break;
                };
                let s = (height(q) - height(v)) / (2.0 * w2 * (q - v) as f64);
                if s <= *self.bounds.last().unwrap() {
                    self.vertices.pop();
                    self.bounds.pop();
                } else {
                    self.vertices.push(q);
                    self.bounds.push(s);
                    break;
                }
            }
        }
        if self.vertices.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }
        let mut k = 0;
        for (q, o) in out.iter_mut().enumerate() {
            let qf = q as f64;
            while k + 1 < self.vertices.len() && self.bounds[k + 1] < qf {
                k += 1;
            }
            let v = self.vertices[k];
            let d = qf - v as f64;
            *o = f[v] + w2 * d * d;
        }
    }
}

/// Per-voxel mm distance to the nearest voxel of a reference set.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField(Volume);

impl DistanceField {
    pub fn from_seeds(seeds: &[bool], shape: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let sq = squared_edt(seeds, shape, spacing)?;
        let data = sq.into_iter().map(f64::sqrt).collect();
        Ok(Self(Volume::new(shape, spacing, data)?))
    }

    pub fn volume(&self) -> &Volume {
        &self.0
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.0.get(x, y, z)
    }
}
