use thiserror::Error;

/// Failure modes shared by every stage of the pipeline.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("insufficient data: need at least {needed} correspondence pairs, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("ill-conditioned system in {context}: condition number {kappa:.3e}")]
    Conditioning { context: String, kappa: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("iteration diverged: {0}")]
    NonConvergence(String),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Coarse class used by the command line front end to pick an exit code.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Argument(_) => ErrorKind::Usage,
            Error::DimensionMismatch { .. }
            | Error::InsufficientData { .. }
            | Error::Degenerate(_)
            | Error::UnsupportedDimension(_)
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::Io(_) => ErrorKind::Data,
            Error::Conditioning { .. }
            | Error::Numeric(_)
            | Error::NonConvergence(_)
            | Error::Calibration(_) => ErrorKind::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
