//! Error type shared by every module.

use thiserror::Error;

/// Failures reported by the solvers, diagnostics and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("lambda = {re}{im:+}i lies outside the sector |arg| < pi - {theta}")]
    Sector { re: f64, im: f64, theta: f64 },
    #[error("the zero horizontal mode is handled by the one-dimensional solver")]
    ZeroMode,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {what} (defect {defect:.3e})")]
    Precondition { what: String, defect: f64 },
    #[error("boundary operator ill-conditioned at mode ({n1},{n2}): condition {cond:.3e}; use a larger |lambda|")]
    ResolventRadius { n1: i64, n2: i64, cond: f64 },
    #[error("singular mode system at |n|^2 = {k2}")]
    Spectrum { k2: i64 },
    #[error("time step too large: advective Courant number {cfl:.3} exceeds 1")]
    StepSize { cfl: f64 },
    #[error("solver did not converge: {0}")]
    Nonconvergence(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
