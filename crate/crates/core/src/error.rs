use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: {dim} mismatch (expected {expected}, got {actual})")]
    ShapeMismatch {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: output {dim} would be empty")]
    EmptyOutput { op: &'static str, dim: &'static str },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),
    #[error("weight store: {0}")]
    Weights(String),
    #[error("report: {0}")]
    Report(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn mismatch(op: &'static str, dim: &'static str, expected: usize, actual: usize) -> Self {
        Error::ShapeMismatch {
            op,
            dim,
            expected,
            actual,
        }
    }
}

pub(crate) fn ensure_eq(op: &'static str, dim: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::mismatch(op, dim, expected, actual))
    }
}
