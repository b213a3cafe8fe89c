use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the screening and metamodeling routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("coding error: {0}")]
    Coding(String),
    #[error("construction error: {0}")]
    Construction(String),
    #[error("aliasing error: {0}")]
    Aliasing(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("connectivity error: {0}")]
    Connectivity(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("no angle constraints available")]
    NoConstraint,
    #[error("empty graph")]
    EmptyGraph,
    #[error("model bundle error: {0}")]
    Bundle(String),
}

impl Error {
    /// Short machine-readable name of the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Data(_) => "data",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Shape(_) => "shape",
            Error::Coding(_) => "coding",
            Error::Construction(_) => "construction",
            Error::Aliasing(_) => "aliasing",
            Error::Degenerate(_) => "degenerate",
            Error::Rank(_) => "rank",
            Error::Connectivity(_) => "connectivity",
            Error::Input(_) => "input",
            Error::Validation(_) => "validation",
            Error::NoConstraint => "no_constraint",
            Error::EmptyGraph => "empty_graph",
            Error::Bundle(_) => "bundle",
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
