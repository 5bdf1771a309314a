//! Dense tensors and the typed volume views built on top of them.
//!
//! All buffers are row-major (last index fastest). Raw tensors keep their
//! on-disk element type so that file round-trips are bit-exact; the typed
//! views (`Volume`, `ProbMap`, `BinaryMask`, `FeatureMap`) work in `f64`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
    U8,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
            DType::U8 => 1,
        }
    }

    /// NPY `descr` string.
    pub fn descr(self) -> &'static str {
        match self {
            DType::F32 => "<f4",
            DType::F64 => "<f8",
            DType::U8 => "|u1",
        }
    }

    pub fn from_descr(descr: &str) -> Result<Self> {
        match descr {
            "<f4" => Ok(DType::F32),
            "<f8" => Ok(DType::F64),
            "|u1" | "<u1" => Ok(DType::U8),
            other => Err(Error::UnsupportedDtype(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::U8(_) => DType::U8,
        }
    }

    /// Little-endian byte image of the buffer.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            TensorData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::U8(v) => v.clone(),
        }
    }

    pub fn from_le_bytes(dtype: DType, bytes: &[u8]) -> Self {
        match dtype {
            DType::F32 => TensorData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::U8 => TensorData::U8(bytes.to_vec()),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
            TensorData::U8(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }
}

/// Dense N-dimensional array with optional voxel spacing in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
    spacing: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidTensor("scalar (empty shape) tensors are not supported".into()));
        }
        if shape.contains(&0) {
            return Err(Error::InvalidTensor(format!("shape {shape:?} has a zero extent")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {expected} elements, buffer has {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            spacing: None,
        })
    }

    pub fn from_f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(shape, TensorData::F64(data))
    }

    /// Attaches per-axis spacing. Spacing covers the leading spatial axes, so
    /// it may be shorter than the shape (e.g. 3 entries for a 4-d feature map).
    pub fn with_spacing(mut self, spacing: Vec<f64>) -> Result<Self> {
        if spacing.is_empty() || spacing.len() > self.shape.len() {
            return Err(Error::InvalidTensor(format!(
                "spacing has {} entries for a {}-d tensor",
                spacing.len(),
                self.shape.len()
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidTensor(format!("spacing {spacing:?} must be positive")));
        }
        self.spacing = Some(spacing);
        Ok(self)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn spacing(&self) -> Option<&[f64]> {
        self.spacing.as_deref()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.to_f64()
    }
}

fn checked_dims(shape: [usize; 3]) -> Result<usize> {
    if shape.contains(&0) {
        return Err(Error::InvalidTensor(format!("volume shape {shape:?} has a zero extent")));
    }
    Ok(shape.iter().product())
}

fn checked_spacing(spacing: [f64; 3]) -> Result<[f64; 3]> {
    if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidTensor(format!("spacing {spacing:?} must be positive")));
    }
    Ok(spacing)
}

#[inline]
pub(crate) fn flat_index(shape: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    (x * shape[1] + y) * shape[2] + z
}

/// Scalar 3D image with voxel spacing in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    shape: [usize; 3],
    spacing: [f64; 3],
    data: Vec<f64>,
}

impl Volume {
    pub fn new(shape: [usize; 3], spacing: [f64; 3], data: Vec<f64>) -> Result<Self> {
        let n = checked_dims(shape)?;
        if data.len() != n {
            return Err(Error::InvalidTensor(format!(
                "volume {shape:?} needs {n} voxels, buffer has {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            spacing: checked_spacing(spacing)?,
            data,
        })
    }

    pub fn filled(shape: [usize; 3], spacing: [f64; 3], value: f64) -> Result<Self> {
        let n = checked_dims(shape)?;
        Self::new(shape, spacing, vec![value; n])
    }

    /// Builds a volume from a 3-d tensor; `default_spacing` is used when the
    /// tensor carries none.
    pub fn from_tensor(t: &Tensor, default_spacing: Option<[f64; 3]>) -> Result<Self> {
        let shape: [usize; 3] = t.shape().try_into().map_err(|_| {
            Error::InvalidTensor(format!("expected a 3-d volume, got shape {:?}", t.shape()))
        })?;
        let spacing = match t.spacing() {
            Some(s) if s.len() == 3 => [s[0], s[1], s[2]],
            Some(s) => {
                return Err(Error::InvalidTensor(format!(
                    "volume spacing needs 3 entries, got {}",
                    s.len()
                )))
            }
            None => default_spacing
                .ok_or_else(|| Error::InvalidTensor("volume has no spacing metadata".into()))?,
        };
        Self::new(shape, spacing, t.to_f64())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f64(self.shape.to_vec(), self.data.clone())
            .and_then(|t| t.with_spacing(self.spacing.to_vec()))
            .expect("volume invariants imply a valid tensor")
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[flat_index(self.shape, x, y, z)]
    }

    /// Same grid, new voxel values.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Volume {
        Volume {
            shape: self.shape,
            spacing: self.spacing,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn same_grid(&self, other: &Volume) -> bool {
        self.shape == other.shape && self.spacing == other.spacing
    }
}

/// Volume with every voxel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap(Volume);

impl ProbMap {
    pub fn new(volume: Volume) -> Result<Self> {
        if let Some(bad) = volume.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidTensor(format!(
                "probability map voxel {bad} outside [0, 1]"
            )));
        }
        Ok(Self(volume))
    }

    pub fn volume(&self) -> &Volume {
        &self.0
    }

    pub fn into_volume(self) -> Volume {
        self.0
    }

    pub fn shape(&self) -> [usize; 3] {
        self.0.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    /// Thresholds at 0.5; ties go to foreground.
    pub fn binarize(&self) -> BinaryMask {
        BinaryMask {
            shape: self.0.shape,
            spacing: self.0.spacing,
            data: self.0.data.iter().map(|&p| p >= 0.5).collect(),
        }
    }
}

/// Binary segmentation on a spaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    shape: [usize; 3],
    spacing: [f64; 3],
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(shape: [usize; 3], spacing: [f64; 3], data: Vec<bool>) -> Result<Self> {
        let n = checked_dims(shape)?;
        if data.len() != n {
            return Err(Error::InvalidTensor(format!(
                "mask {shape:?} needs {n} voxels, buffer has {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            spacing: checked_spacing(spacing)?,
            data,
        })
    }

    /// Accepts a volume whose voxels are exactly 0 or 1.
    pub fn from_volume(v: &Volume) -> Result<Self> {
        let mut data = Vec::with_capacity(v.len());
        for &x in v.data() {
            if x == 0.0 {
                data.push(false);
            } else if x == 1.0 {
                data.push(true);
            } else {
                return Err(Error::InvalidTensor(format!("mask voxel {x} is not 0 or 1")));
            }
        }
        Self::new(v.shape(), v.spacing(), data)
    }

    pub fn to_volume(&self) -> Volume {
        Volume {
            shape: self.shape,
            spacing: self.spacing,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[flat_index(self.shape, x, y, z)]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// CNN activations laid out as `(w, h, d, n)`: three spatial axes, then channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    spatial: [usize; 3],
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(spatial: [usize; 3], channels: usize, data: Vec<f64>) -> Result<Self> {
        let n = checked_dims(spatial)?;
        if channels == 0 {
            return Err(Error::InvalidTensor("feature map needs at least one channel".into()));
        }
        if data.len() != n * channels {
            return Err(Error::InvalidTensor(format!(
                "feature map {spatial:?}x{channels} needs {} values, buffer has {}",
                n * channels,
                data.len()
            )));
        }
        Ok(Self {
            spatial,
            channels,
            data,
        })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [w, h, d, n] => Self::new([w, h, d], n, t.to_f64()),
            _ => Err(Error::InvalidTensor(format!(
                "expected a (w, h, d, n) feature map, got shape {:?}",
                t.shape()
            ))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        let [w, h, d] = self.spatial;
        Tensor::from_f64(vec![w, h, d, self.channels], self.data.clone())
            .expect("feature map invariants imply a valid tensor")
    }

    pub fn spatial(&self) -> [usize; 3] {
        self.spatial
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of rows of the `(w·h·d) × n` reshaped matrix.
    pub fn voxels(&self) -> usize {
        self.spatial.iter().product()
    }

    /// Row-major `(w·h·d) × n` matrix view.
    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_scalar_and_mismatched_buffers() {
        assert!(Tensor::from_f64(vec![], vec![1.0]).is_err());
        assert!(Tensor::from_f64(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::from_f64(vec![2, 0], vec![]).is_err());
        assert!(Tensor::from_f64(vec![1], vec![0.0]).is_ok());
    }

    #[test]
    fn spacing_must_be_positive() {
        let t = Tensor::from_f64(vec![1, 1, 1], vec![0.0]).unwrap();
        assert!(t.clone().with_spacing(vec![1.0, 0.0, 1.0]).is_err());
        assert!(t.clone().with_spacing(vec![1.0; 4]).is_err());
        assert!(t.with_spacing(vec![0.8; 3]).is_ok());
    }

    #[test]
    fn prob_map_bounds() {
        let v = Volume::new([1, 1, 2], [1.0; 3], vec![0.2, 1.2]).unwrap();
        assert!(ProbMap::new(v).is_err());
        let v = Volume::new([1, 1, 2], [1.0; 3], vec![0.0, 1.0]).unwrap();
        assert!(ProbMap::new(v).is_ok());
    }

    #[test]
    fn mask_from_volume_requires_binary_values() {
        let v = Volume::new([1, 1, 3], [1.0; 3], vec![0.0, 1.0, 0.5]).unwrap();
        assert!(BinaryMask::from_volume(&v).is_err());
        let v = Volume::new([1, 1, 2], [1.0; 3], vec![0.0, 1.0]).unwrap();
        assert_eq!(BinaryMask::from_volume(&v).unwrap().count(), 1);
    }

    #[test]
    fn binarize_ties_to_foreground() {
        let v = Volume::new([1, 1, 3], [1.0; 3], vec![0.49, 0.5, 0.9]).unwrap();
        let m = ProbMap::new(v).unwrap().binarize();
        assert_eq!(m.data(), &[false, true, true]);
    }

    #[test]
    fn feature_map_from_tensor() {
        let t = Tensor::from_f64(vec![2, 1, 1, 3], (0..6).map(f64::from).collect()).unwrap();
        let f = FeatureMap::from_tensor(&t).unwrap();
        assert_eq!(f.voxels(), 2);
        assert_eq!(f.channels(), 3);
        assert!(FeatureMap::from_tensor(&Tensor::from_f64(vec![6], vec![0.0; 6]).unwrap()).is_err());
    }
}
