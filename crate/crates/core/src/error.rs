use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed NIfTI header: {0}")]
    Header(String),

    #[error("non-axis-aligned orientation; direction matrix {0:?}")]
    NonAxisAligned([[f64; 3]; 3]),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("volume contains NaN voxels")]
    NanVoxel,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("volume has zero variance")]
    ConstantVolume,

    #[error("mask has no foreground voxels")]
    EmptyMask,

    #[error("label {0} not present in mask")]
    MissingLabel(u16),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("registration diverged at level {level}, iteration {iteration}: {reason}")]
    Diverged {
        level: usize,
        iteration: usize,
        reason: String,
    },

    #[error("segmenter failed: {0}")]
    Segmenter(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
