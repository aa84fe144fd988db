//! Error type shared by the whole crate.

use thiserror::Error;

/// Crate-wide error enum.
#[derive(Debug, Error)]
pub enum Error {
    /// A state lies outside the support of the reference measure.
    #[error("state outside the reference support")]
    OutsideSupport,

    /// A matrix that must be symmetric positive definite is not.
    #[error("factorization failed: {0}")]
    FactorizationFailed(String),

    /// The objective has no nondegenerate minimum at the candidate point.
    #[error("degenerate minimum: {0}")]
    DegenerateMinimum(String),

    /// The optimizer ran out of iterations; carries the best iterate seen.
    #[error("optimizer did not converge after {iterations} iterations (|grad| = {grad_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        best: Vec<f64>,
    },

    /// A Markov chain reached a state it must never occupy.
    #[error("invalid chain state: {0}")]
    InvalidState(String),

    /// Bad user-supplied configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Adaptive quadrature exhausted its refinement schedule.
    #[error("quadrature did not converge: last two estimates {previous:.12e}, {last:.12e}")]
    QuadratureDidNotConverge { previous: f64, last: f64 },

    /// Tensor quadrature is only available in low dimension.
    #[error("dimension {dim} exceeds the quadrature limit {max}")]
    DimensionTooLarge { dim: usize, max: usize },

    /// A pushforward fiber carries no stationary mass.
    #[error("degenerate fiber: merged state {0} has zero stationary mass")]
    DegenerateFiber(usize),

    /// A finite chain fails the detailed-balance residual check.
    #[error("chain is not reversible (residual {residual:.3e})")]
    NotReversible { residual: f64 },

    /// A functional is constant along the chain, so autocorrelations are undefined.
    #[error("functional is (numerically) constant along the chain")]
    DegenerateFunctional,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
