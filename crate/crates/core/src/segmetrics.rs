//! Overlap and surface-distance metrics: soft/hard Dice, HD95 and ASSD.
//!
//! Conventions: boundary voxels use 6-connectivity with the volume border
//! counted as background; percentiles interpolate linearly at rank
//! `(n - 1) q`; HD95 is the larger of the two directed 95th percentiles unless
//! the pooled variant is requested.

use serde::{Deserialize, Serialize};

use crate::edt::DistanceField;
use crate::error::{Error, Result};
use crate::stats::percentile_linear;
use crate::tensor::{flat_index, BinaryMask, ProbMap};

fn check_shapes(a: [usize; 3], b: [usize; 3]) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// `2 Σ p q / (Σ p + Σ q)`, defined as 1 when both maps are all zero.
pub fn soft_dice(p: &ProbMap, q: &ProbMap) -> Result<f64> {
    check_shapes(p.shape(), q.shape())?;
    let (mut inter, mut sp, mut sq) = (0.0, 0.0, 0.0);
    for (&a, &b) in p.data().iter().zip(q.data()) {
        inter += a * b;
        sp += a;
        sq += b;
    }
    if sp + sq == 0.0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter / (sp + sq))
}

/// Training loss value: the negated soft Dice.
pub fn dice_loss(p: &ProbMap, q: &ProbMap) -> Result<f64> {
    Ok(-soft_dice(p, q)?)
}

/// `2 |A ∩ B| / (|A| + |B|)`, 1 when both masks are empty.
pub fn hard_dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_shapes(a.shape(), b.shape())?;
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += usize::from(x && y);
        na += usize::from(x);
        nb += usize::from(y);
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Foreground voxels touching background through a face.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceVoxelSet {
    pub voxels: Vec<[usize; 3]>,
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
}

impl SurfaceVoxelSet {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn indicator(&self) -> Vec<bool> {
        let mut ind = vec![false; self.shape.iter().product()];
        for &[x, y, z] in &self.voxels {
            ind[flat_index(self.shape, x, y, z)] = true;
        }
        ind
    }
}

pub fn extract_surface(m: &BinaryMask) -> SurfaceVoxelSet {
    let shape = m.shape();
    let [nx, ny, nz] = shape;
    let mut voxels = Vec::new();
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                if !m.get(x, y, z) {
                    continue;
                }
                let border = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz;
                if border
                    || !m.get(x - 1, y, z)
                    || !m.get(x + 1, y, z)
                    || !m.get(x, y - 1, z)
                    || !m.get(x, y + 1, z)
                    || !m.get(x, y, z - 1)
                    || !m.get(x, y, z + 1)
                {
                    voxels.push([x, y, z]);
                }
            }
        }
    }
    SurfaceVoxelSet {
        voxels,
        shape,
        spacing: m.spacing(),
    }
}

/// Exact distance field (mm) to the given surface.
pub fn edt_exact(surface: &SurfaceVoxelSet) -> Result<DistanceField> {
    if surface.is_empty() {
        return Err(Error::EmptySurface);
    }
    DistanceField::from_seeds(&surface.indicator(), surface.shape, surface.spacing)
}

pub fn directed_surface_distances(a: &SurfaceVoxelSet, field_b: &DistanceField) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::EmptySurface);
    }
    check_shapes(a.shape, field_b.volume().shape())?;
    Ok(a.voxels.iter().map(|&[x, y, z]| field_b.get(x, y, z)).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hd95Mode {
    /// `max(P95(a→b), P95(b→a))`.
    #[default]
    MaxOfDirected,
    /// P95 of the concatenated directed distances.
    Pooled,
}

impl Hd95Mode {
    pub fn label(self) -> &'static str {
        match self {
            Hd95Mode::MaxOfDirected => "max-of-directed",
            Hd95Mode::Pooled => "pooled",
        }
    }
}

/// Both directed surface-distance vectors between two masks.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceDistances {
    pub a_to_b: Vec<f64>,
    pub b_to_a: Vec<f64>,
}

impl SurfaceDistances {
    pub fn between(a: &BinaryMask, b: &BinaryMask) -> Result<Self> {
        check_shapes(a.shape(), b.shape())?;
        if a.spacing() != b.spacing() {
            return Err(Error::ShapeMismatch(format!(
                "spacing {:?} vs {:?}",
                a.spacing(),
                b.spacing()
            )));
        }
        if a.count() == 0 {
            return Err(Error::EmptyMask("first mask"));
        }
        if b.count() == 0 {
            return Err(Error::EmptyMask("second mask"));
        }
        let sa = extract_surface(a);
        let sb = extract_surface(b);
        Ok(Self {
            a_to_b: directed_surface_distances(&sa, &edt_exact(&sb)?)?,
            b_to_a: directed_surface_distances(&sb, &edt_exact(&sa)?)?,
        })
    }

    pub fn hd95(&self, mode: Hd95Mode) -> f64 {
        match mode {
            Hd95Mode::MaxOfDirected => {
                let ab = percentile_linear(&self.a_to_b, 0.95).expect("non-empty");
                let ba = percentile_linear(&self.b_to_a, 0.95).expect("non-empty");
                ab.max(ba)
            }
            Hd95Mode::Pooled => {
                let mut all = self.a_to_b.clone();
                all.extend_from_slice(&self.b_to_a);
                percentile_linear(&all, 0.95).expect("non-empty")
            }
        }
    }

    pub fn assd(&self) -> f64 {
        let total: f64 = self.a_to_b.iter().sum::<f64>() + self.b_to_a.iter().sum::<f64>();
        total / (self.a_to_b.len() + self.b_to_a.len()) as f64
    }

    /// Classic Hausdorff distance (largest directed distance).
    pub fn hausdorff(&self) -> f64 {
        self.a_to_b
            .iter()
            .chain(&self.b_to_a)
            .copied()
            .fold(0.0, f64::max)
    }
}

pub fn hd95(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    Ok(SurfaceDistances::between(a, b)?.hd95(Hd95Mode::MaxOfDirected))
}

pub fn assd(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    Ok(SurfaceDistances::between(a, b)?.assd())
}
