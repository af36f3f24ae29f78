use std::path::PathBuf;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite entry at flat index {0}")]
    NonFinite(usize),

    #[error("invalid column index set: {0}")]
    InvalidIndexSet(String),

    #[error("invalid block set: {0}")]
    InvalidBlockSet(String),

    /// bcirc of the column block is not of full column rank, so the
    /// block normal equations have no unique solution.
    #[error("column block {block:?} is rank deficient (sigma_min / sigma_max = {ratio:.3e})")]
    RankDeficientBlock { block: Vec<usize>, ratio: f64 },

    #[error("orthogonal noise component vanished (|B_perp| / |B~| = {ratio:.3e}); the range of A fills the space")]
    DegenerateNoise { ratio: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
