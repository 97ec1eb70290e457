use crate::prelude::*;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("generator row {row} sums to {sum:e}, expected 0")]
    RowSumViolation { row: usize, sum: f64 },
    #[error("generator rate r[{row},{col}] = {rate} must be positive")]
    NonPositiveRate { row: usize, col: usize, rate: f64 },
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("time {t} outside covered range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("coefficient returned a non-finite value at t={t}, mode {mode}")]
    NonFiniteCoefficient { t: f64, mode: usize },
    #[error("matrix Q for mode {mode} is not symmetric positive definite")]
    NotSpd { mode: usize },
    #[error("solution blew up at t={t}{}", path.map(|p| format!(" (path {p})")).unwrap_or_default())]
    Blowup { t: f64, path: Option<u64> },
    #[error("grid alignment: {0}")]
    GridMisalignment(String),
    #[error("segment grids differ: {0}")]
    GridMismatch(String),
    #[error("transport solve failed: {0}")]
    LpFailure(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Numerical failures of a simulation, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Blowup { .. } | Error::NonFiniteCoefficient { .. } | Error::LpFailure(_))
    }

    pub(crate) fn with_path(self, path: u64) -> Self {
        match self {
            Error::Blowup { t, .. } => Error::Blowup { t, path: Some(path) },
            other => other,
        }
    }
}
