use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("ellipticity violated at t={t}, x={x:?}: min eigenvalue {min_eigenvalue:e} < floor {floor:e}")]
    EllipticityViolation {
        t: f64,
        x: Vec<f64>,
        min_eigenvalue: f64,
        floor: f64,
    },
    #[error("unsupported jet order {0} (max 3)")]
    UnsupportedOrder(usize),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("trajectory blew up at t={t} (|x| = {norm:e})")]
    BlowUp { t: f64, norm: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
