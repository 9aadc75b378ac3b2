use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the processing library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {kind}", path.display())]
    Parse { path: PathBuf, kind: ParseErrorKind },

    #[error("SVD of a {rows}x{cols} matrix did not converge")]
    Decomposition { rows: usize, cols: usize },

    #[error("need at least {required} singular components, got {available}")]
    InsufficientData { required: usize, available: usize },

    #[error("component index {index} out of range for {k} components")]
    IndexOutOfRange { index: usize, k: usize },

    #[error("label {label} has no pixels")]
    EmptyRegion { label: u32 },

    #[error("background mean is zero; SNR is undefined")]
    ZeroBackground,

    #[error("cell sets differ between reports (first mismatch: {0})")]
    MismatchedCells(String),

    #[error(
        "tile needs ~{required} bytes but the memory budget is {budget} bytes; use smaller tiles"
    )]
    MemoryBudget { required: u64, budget: u64 },
}

/// Reasons a stack, image or mask file was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("bad magic (expected \"DSTK\")")]
    BadMagic,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u64),
    #[error("unknown dtype `{0}`")]
    UnknownDtype(String),
    #[error("declared dimensions overflow")]
    DimsOverflow,
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{0} trailing bytes after payload")]
    TrailingData(u64),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("non-integer label {value} at index {index}")]
    NonIntegerLabel { index: usize, value: f32 },
    #[error("malformed PGM: {0}")]
    MalformedPgm(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, kind: ParseErrorKind) -> Self {
        Error::Parse {
            path: path.into(),
            kind,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
