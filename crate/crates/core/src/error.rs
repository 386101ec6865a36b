use thiserror::Error;

/// Errors raised by the transport-manifold geometry, solvers and baselines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("marginal masses differ: sum(mu1) = {sum1}, sum(mu2) = {sum2}")]
    MassMismatch { sum1: f64, sum2: f64 },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("expected {expected} coupling(s), got {got}")]
    Arity { expected: usize, got: usize },

    #[error("point has a non-positive entry at ({row}, {col})")]
    BoundaryPoint { row: usize, col: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("retraction step rejected: max entry of xi/gamma is {ratio:e}, cap is {cap}")]
    Overflow { ratio: f64, cap: f64 },

    #[error("kernel has an empty {axis} at index {index}")]
    Structural { axis: &'static str, index: usize },

    #[error("support pattern lacks total support: entry ({row}, {col}) lies on no positive diagonal")]
    Support { row: usize, col: usize },

    #[error("support pattern has {allowed} free entries, needs more than {required}")]
    Rank { allowed: usize, required: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
