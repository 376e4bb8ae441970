//! Error type shared by all solver and assembly routines.

use thiserror::Error;

/// Errors produced by grid construction, assembly, and the iterative solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or routine precondition was violated.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two functions (or a function and an operator) live on different grids.
    #[error("grid mismatch: operands are discretized on different grids")]
    GridMismatch,

    /// The requested operation needs data this potential variant cannot provide.
    #[error("potential variant does not support {0}")]
    UnsupportedPotential(&'static str),

    /// The quadratic part F(v) + omega*||v||^2 is not positive: omega is at or
    /// below the bottom of the spectrum, so Nehari-based routines are undefined.
    #[error("omega = {omega} is not above the spectral bottom (quadratic form not positive definite)")]
    OmegaBelowSpectrum { omega: f64 },

    /// An iterative solver ran out of iterations.
    #[error("{what} did not converge within {iterations} iterations (last residual {last:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        last: f64,
    },

    /// The Crank-Nicolson midpoint fixed point failed to contract.
    #[error("midpoint fixed-point iteration stalled at t = {t:.6} (step {step}); reduce dt")]
    FixedPointStalled { step: usize, t: f64 },

    /// The evolving state left the guarded H1 ball around its initial size.
    #[error("H1 norm grew {factor:.3e}-fold by t = {t:.6}; blow-up guard tripped")]
    BlowUpGuard { t: f64, factor: f64 },

    /// Malformed tabulated-potential data.
    #[error("tabulated potential: {0}")]
    TabulatedData(String),

    /// A factorization hit an exactly/near-zero pivot.
    #[error("matrix factorization broke down at dof {index} (zero pivot)")]
    SingularMatrix { index: usize },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
