use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by segguard operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed tensor file: {0}")]
    MalformedFile(String),
    #[error("unsupported dtype {0:?}")]
    UnsupportedDtype(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("degenerate image: voxel standard deviation is zero")]
    DegenerateImage,
    #[error("degenerate spectrum{}: log-spectrum has zero norm", label_suffix(.label))]
    DegenerateSpectrum { label: Option<String> },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("signature length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("insufficient data: need at least {needed}, got {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("inconsistent channel counts: {label} has {found}, expected {expected}")]
    InconsistentChannels {
        label: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("empty surface set")]
    EmptySurface,
    #[error("empty mask: {0} has no foreground voxels")]
    EmptyMask(&'static str),
    #[error("labels need at least one positive and one negative")]
    DegenerateLabels,
    #[error("empty dataset catalog")]
    EmptyCatalog,
    #[error("block {block:?} larger than volume {volume:?}")]
    BlockTooLarge {
        block: [usize; 3],
        volume: [usize; 3],
    },
    #[error("overlap {overlap} must be smaller than every block extent {block:?}")]
    InvalidOverlap { overlap: usize, block: [usize; 3] },
    #[error("block set does not match tiling plan: {0}")]
    PlanMismatch(String),
    #[error("shape {0:?} too small")]
    ShapeTooSmall(Vec<usize>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn label_suffix(label: &Option<String>) -> String {
    match label {
        Some(l) => format!(" for {l:?}"),
        None => String::new(),
    }
}

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::NumericalFailure(_) | Error::DegenerateSpectrum { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
