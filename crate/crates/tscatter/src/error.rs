//! Error type shared by all modules of the crate.

use crate::domain::DomainReport;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in this crate.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A Cholesky pivot fell at or below the positive-definiteness floor.
    #[error(
        "matrix is not positive definite: pivot {pivot:.6e} at index {index} (floor {floor:.6e})"
    )]
    NotPositiveDefinite {
        index: usize,
        pivot: f64,
        floor: f64,
    },

    /// The Jacobi eigenvalue sweep did not reach the off-diagonal target.
    #[error("eigenvalue iteration did not converge within {sweeps} sweeps (off-diagonal norm {off_norm:.3e})")]
    ConvergenceFailure { sweeps: usize, off_norm: f64 },

    /// Mismatched vector/matrix dimensions.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionError { expected: usize, got: usize },

    /// An argument outside the mathematical domain of an operation
    /// (negative squared radius, non-positive gamma, and the like).
    #[error("invalid argument: {0}")]
    DomainError(String),

    /// An inconsistent configuration (nu or the mass bound out of range).
    #[error("invalid configuration: {0}")]
    ConfigError(String),

    /// Points and weights do not form a valid finitely supported law.
    #[error("invalid sample: {0}")]
    InvalidSample(String),

    /// The law lies outside the existence domain of the requested functional.
    /// Carries the membership report with the extremal witnesses.
    #[error("law outside the existence domain: mass {max_mass:.6} on a {q}-dimensional subspace reaches threshold {threshold:.6}", max_mass = .0.worst().map(|d| d.max_mass).unwrap_or(f64::NAN), q = .0.worst().map(|d| d.q).unwrap_or(0), threshold = .0.worst().map(|d| d.threshold).unwrap_or(f64::NAN))]
    DomainViolation(Box<DomainReport>),

    /// The fixed-point iteration hit the iteration cap before meeting the
    /// residual targets. Carries the smallest-eigenvalue trace so collapse
    /// towards a singular limit can be diagnosed.
    #[error("no convergence after {iterations} iterations (fixed-point residual {residual:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        min_eigenvalue_trace: Vec<f64>,
    },

    /// The exact subspace search would exceed its enumeration budget.
    #[error(
        "exact subspace search over {candidates} candidate subsets exceeds the budget of {budget}"
    )]
    ExplicitLimitation { candidates: u128, budget: u128 },

    /// A structural identity that must hold at a converged solution failed.
    #[error("solver invariant violated: {0}")]
    InvariantViolation(String),
}

impl Error {
    /// Domain-membership report attached to a `DomainViolation`, if any.
    pub fn domain_report(&self) -> Option<&DomainReport> {
        match self {
            Error::DomainViolation(report) => Some(report),
            _ => None,
        }
    }
}
