use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("series did not converge for M(a={a}, b={b}, z={z})")]
    SeriesNotConverged { a: f64, b: f64, z: f64 },

    #[error("value with log-magnitude {log_mag} overflows f64")]
    Overflow { log_mag: f64 },

    #[error("solver did not converge: final iterate {iterate}, slope {slope:e}")]
    SolverNotConverged { iterate: f64, slope: f64 },

    #[error("sampler configuration error: {0}")]
    SamplerConfig(String),

    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (recon={recon}, kld={kld})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        recon: f64,
        kld: f64,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("truncated payload: expected {expected} bytes, {available} available")]
    Truncated { expected: usize, available: usize },

    #[error("quadratic surrogate exceeds the exact KL in {cells} sweep cell(s)")]
    BoundViolated { cells: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for domain/validation, 2 for numerical
    /// non-convergence, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SeriesNotConverged { .. }
            | Error::SolverNotConverged { .. }
            | Error::Overflow { .. }
            | Error::NonFiniteActivation { .. }
            | Error::NonFiniteLoss { .. } => 2,
            Error::File { .. } | Error::Io(_) | Error::Csv(_) => 3,
            _ => 1,
        }
    }
}
