use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("photon number {n} out of range for truncation dimension {dim}")]
    OutOfRange { n: usize, dim: usize },

    #[error("truncation too small: {0}")]
    Truncation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pump amplitude |xi|^2 = {requested:.3} exceeds calibrated range {limit:.3}")]
    Extrapolation { requested: f64, limit: f64 },

    #[error("calibration fit failed: {0}")]
    Fit(String),

    #[error("infeasible pulse: {reason} (first at t = {time:.4e} s)")]
    InfeasiblePulse { time: f64, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no convergence after {iterations} iterations: {what}")]
    NonConvergence { iterations: usize, what: String },

    #[error("leakage {leakage:.3e} outside the two-qubit block exceeds {tolerance:.1e}")]
    Leakage { leakage: f64, tolerance: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors that stem from requested physics being out of reach
    /// (pump saturation, unsupported truncation) rather than bad input or
    /// numerical trouble.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::InfeasiblePulse { .. } | Error::Extrapolation { .. } | Error::Truncation(_)
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Integrator(_) | Error::NonConvergence { .. } | Error::Fit(_)
        )
    }
}
