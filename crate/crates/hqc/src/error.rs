//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by lattice operators, solvers and the HQC method.
#[derive(Debug, Error)]
pub enum HqcError {
    /// Two lattice functions on different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Invalid argument (zero step, q < 1, bad mesh, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A potential was evaluated outside its admissible domain.
    /// Carries the site, the neighbor offset and the offending argument.
    #[error("potential domain violation at site {site}, offset {offset}: z = {z}")]
    DomainViolation { site: usize, offset: i64, z: f64 },

    /// An iterative solver did not reach its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// A bilinear form that must be coercive is not; carries the smallest
    /// pivot (or eigenvalue estimate) encountered.
    #[error("non-coercive operator: smallest pivot {smallest_pivot:.3e}")]
    NonCoercive { smallest_pivot: f64 },

    /// A direct factorization broke down.
    #[error("singular system: pivot {pivot:.3e} at index {index}")]
    SingularSystem { pivot: f64, index: usize },

    /// A constrained solve was given a right-hand side with nonzero mean.
    #[error("right-hand side has nonzero mean {mean:.3e}")]
    NonZeroMeanRhs { mean: f64 },

    /// Configuration or I/O failure in the experiment harness.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HqcError>;
