use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    VersionMismatch(u32),

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("trailing data: expected {expected} bytes, found {actual}")]
    TrailingData { expected: u64, actual: u64 },

    #[error("negative feature {value} at sample {sample}, column {column}")]
    NegativeFeature {
        sample: usize,
        column: usize,
        value: f32,
    },

    #[error("empty set")]
    EmptySet,

    #[error("header field {field} = {value} does not fit in 32 bits")]
    HeaderOverflow { field: &'static str, value: usize },

    #[error("invalid activation set: {0}")]
    InvalidSet(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("filter id {id} out of range (layer has {n_filters} filters)")]
    FilterOutOfRange { id: usize, n_filters: usize },

    #[error("label {0} has no samples")]
    MissingLabel(usize),

    #[error("field matrix is not normalized")]
    Unnormalized,

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("exhaustive clique scan supports at most {max} labels, got {got}")]
    TooManyLabels { got: usize, max: usize },

    #[error("cluster set inconsistent with clip matrix: {0}")]
    InconsistentClusters(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSynthetic(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
