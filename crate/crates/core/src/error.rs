use thiserror::Error;

/// Failure modes shared across the crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A mesh (usually a mapped one) has points closer than the collision
    /// tolerance, so the difference operator on it would be meaningless.
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("singular operator: {0}")]
    SingularOperator(String),

    /// The quasi-Newton residual minimizer ran out of iterations before the
    /// gradient tolerance was met.
    #[error("nonlinear solver failed: gradient norm {grad_norm:.3e} after {iterations} iterations")]
    NonlinearSolverFailure { iterations: usize, grad_norm: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The mapping integrand vanished identically, so no mesh mapping can be
    /// extracted from it.
    #[error("degenerate criterion: {0}")]
    DegenerateCriterion(String),

    /// More than the tolerated fraction of sampled solves failed.
    #[error("{failed} of {total} sampled solves failed, above the 1% abort threshold")]
    FailureRateExceeded { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
