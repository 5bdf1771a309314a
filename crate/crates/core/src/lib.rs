//! Reliability tooling for 3D segmentation models.
//!
//! - [`spectral`]: spectral-signature OOD detection from CNN feature maps
//! - [`uncertainty`]: MC-dropout entropy baseline
//! - [`calibration`]: ECE / MCE over voxel-wise predictions
//! - [`segmetrics`]: Dice, HD95 and ASSD on exact distance transforms
//! - [`detect`]: accuracy / sensitivity / specificity and ROC AUC
//! - [`sampling`] and [`tiling`]: multi-dataset sampling and sliding windows
//! - [`synth`]: deterministic synthetic volumes and a random-weight extractor
//!
//! Tensors move in and out as NPY files ([`npy`]).

pub mod calibration;
pub mod detect;
pub mod edt;
pub mod error;
pub mod normalize;
pub mod npy;
pub mod rng;
pub mod sampling;
pub mod segmetrics;
pub mod spectral;
pub mod stats;
pub mod svd;
pub mod synth;
pub mod tensor;
pub mod tiling;
pub mod uncertainty;

pub use error::{Error, ErrorKind, Result};
pub use tensor::{BinaryMask, DType, FeatureMap, ProbMap, Tensor, TensorData, Volume};
