use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite argument to {0}")]
    NonFinite(&'static str),
    #[error("{func} has a pole at {at}")]
    Pole { func: &'static str, at: f64 },
    #[error("{func} failed to converge: {detail}")]
    Convergence { func: &'static str, detail: String },
    #[error("quadrature did not reach tolerance {tol:e}; estimated error {achieved:e}")]
    Quadrature { tol: f64, achieved: f64 },
    #[error("argument out of range: {0}")]
    Range(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("no dominant spectral peak: {0}")]
    NoPeak(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("format error: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
