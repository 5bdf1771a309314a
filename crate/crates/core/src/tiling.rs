//! Sliding-window tiling of a volume into overlapping blocks, and
//! reassembly of per-block predictions by averaging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{flat_index, ProbMap, Volume};

pub const DEFAULT_BLOCK: [usize; 3] = [96, 96, 96];
pub const DEFAULT_OVERLAP: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingPlan {
    pub volume_shape: [usize; 3],
    pub block_size: [usize; 3],
    pub overlap: usize,
    /// Lexicographically increasing block origins.
    pub origins: Vec<[usize; 3]>,
}

/// Origins `0, s, 2s, …` along one axis with `s = block - overlap`; the last
/// block is shifted back to sit flush with the far border.
pub fn axis_origins(extent: usize, block: usize, overlap: usize) -> Vec<usize> {
    let stride = block - overlap;
    let last = extent - block;
    let mut out: Vec<usize> = (0..).map(|i| i * stride).take_while(|&o| o < last).collect();
    out.push(last);
    out
}

pub fn tiling_origins(volume_shape: [usize; 3], block: [usize; 3], overlap: usize) -> Result<TilingPlan> {
    if block.contains(&0) || volume_shape.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "block {block:?} and volume {volume_shape:?} need positive extents"
        )));
    }
    if block.iter().zip(&volume_shape).any(|(b, v)| b > v) {
        return Err(Error::BlockTooLarge {
            block,
            volume: volume_shape,
        });
    }
    if overlap >= *block.iter().min().unwrap() {
        return Err(Error::InvalidOverlap { overlap, block });
    }
    let per_axis: Vec<Vec<usize>> = (0..3)
        .map(|a| axis_origins(volume_shape[a], block[a], overlap))
        .collect();
    let mut origins = Vec::new();
    for &x in &per_axis[0] {
        for &y in &per_axis[1] {
            for &z in &per_axis[2] {
                origins.push([x, y, z]);
            }
        }
    }
    Ok(TilingPlan {
        volume_shape,
        block_size: block,
        overlap,
        origins,
    })
}

impl TilingPlan {
    /// Number of blocks covering each voxel.
    pub fn coverage(&self) -> Vec<u32> {
        let shape = self.volume_shape;
        let mut cov = vec![0u32; shape.iter().product()];
        for o in &self.origins {
            for_each_voxel(o, self.block_size, |_, idx| cov[flat_index(shape, idx[0], idx[1], idx[2])] += 1);
        }
        cov
    }

    /// Copies one block out of a volume (for running inference per block).
    pub fn extract_block(&self, v: &Volume, origin: [usize; 3]) -> Result<Volume> {
        if v.shape() != self.volume_shape {
            return Err(Error::PlanMismatch(format!(
                "volume {:?} vs plan {:?}",
                v.shape(),
                self.volume_shape
            )));
        }
        let mut data = vec![0.0; self.block_size.iter().product()];
        for_each_voxel(&origin, self.block_size, |local, global| {
            data[local] = v.get(global[0], global[1], global[2]);
        });
        Volume::new(self.block_size, v.spacing(), data)
    }
}

/// Visits every voxel of a block, passing its block-local flat index and
/// volume coordinates.
fn for_each_voxel(origin: &[usize; 3], block: [usize; 3], mut f: impl FnMut(usize, [usize; 3])) {
    let mut local = 0;
    for x in 0..block[0] {
        for y in 0..block[1] {
            for z in 0..block[2] {
                f(local, [origin[0] + x, origin[1] + y, origin[2] + z]);
                local += 1;
            }
        }
    }
}

/// Averages overlapping block predictions into one volume-sized map.
///
/// Every plan origin must appear exactly once; block order does not matter.
pub fn assemble_blocks(blocks: &[([usize; 3], ProbMap)], plan: &TilingPlan) -> Result<ProbMap> {
    if blocks.len() != plan.origins.len() {
        return Err(Error::PlanMismatch(format!(
            "{} blocks for {} origins",
            blocks.len(),
            plan.origins.len()
        )));
    }
    let mut sorted: Vec<&([usize; 3], ProbMap)> = blocks.iter().collect();
    sorted.sort_by_key(|(o, _)| *o);
    for ((origin, block), expected) in sorted.iter().zip(&plan.origins) {
        if origin != expected {
            return Err(Error::PlanMismatch(format!("unexpected block origin {origin:?}")));
        }
        if block.shape() != plan.block_size {
            return Err(Error::PlanMismatch(format!(
                "block at {origin:?} has shape {:?}, plan expects {:?}",
                block.shape(),
                plan.block_size
            )));
        }
    }
    let spacing = sorted[0].1.volume().spacing();
    let shape = plan.volume_shape;
    let mut sum = vec![0.0; shape.iter().product()];
    let mut count = vec![0u32; sum.len()];
    for (origin, block) in sorted {
        let values = block.data();
        for_each_voxel(origin, plan.block_size, |local, g| {
            let idx = flat_index(shape, g[0], g[1], g[2]);
            sum[idx] += values[local];
            count[idx] += 1;
        });
    }
    let data = sum
        .into_iter()
        .zip(count)
        .map(|(s, c)| (s / c as f64).clamp(0.0, 1.0))
        .collect();
    ProbMap::new(Volume::new(shape, spacing, data)?)
}
