//! Intensity normalization for CT and MR volumes.

use crate::error::{Error, Result};
use crate::stats::population_std;
use crate::tensor::Volume;

const HU_MIN: f64 = -1000.0;
const HU_MAX: f64 = 1000.0;

/// Maps Hounsfield units in `[-1000, 1000]` linearly onto `[0, 1]`.
/// Values outside the window are clamped.
pub fn normalize_ct(v: &Volume) -> Volume {
    v.map(|hu| ((hu - HU_MIN) / (HU_MAX - HU_MIN)).clamp(0.0, 1.0))
}

/// Divides by the population standard deviation of the voxel intensities.
pub fn normalize_mr(v: &Volume) -> Result<Volume> {
    let std = population_std(v.data());
    if std.is_nan() || std <= 0.0 {
        return Err(Error::DegenerateImage);
    }
    Ok(v.map(|x| x / std))
}
