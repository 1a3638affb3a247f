use thiserror::Error;

/// Errors surfaced by model validation and the numerical routines.
///
/// Iterative solvers do not error on slow convergence: they return their best
/// iterate together with a `converged` flag (see `recovery::RecoveryResult`).
/// Errors here are reserved for invalid inputs and genuine numerical
/// breakdown (e.g. an un-bracketable root, or an overflowing constant).
#[derive(Debug, Error)]
pub enum Error {
    /// Block structure is inconsistent (sizes don't sum to `n`, empty block,
    /// overlapping or out-of-range indices).
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    /// Prior violates its domain (probability outside `(0, 1)`, accuracy
    /// outside `[0, 1]`, overlapping sets, or a missing accuracy for the
    /// complement set).
    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    /// Weight vector is empty, non-positive, or of mismatched length.
    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    /// Shapes of matrices/vectors do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Argument outside the documented domain of a numerical routine.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A sign-changing bracket could not be established for a scalar root.
    /// Cannot happen for in-domain inputs of the weight equation; reported
    /// with diagnostics if numerical degeneracy defeats the doubling search.
    #[error("root bracketing failed: {0}")]
    BracketFailure(String),

    /// A quantity left the representable range (e.g. the robustness constant
    /// at a probability so small that its gamma term underflows).
    #[error("overflow: {0}")]
    Overflow(String),

    /// A matrix factorization broke down (loss of positive definiteness,
    /// non-finite entries).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The constraint set of a recovery program is empty (equality-constrained
    /// observations outside the range of the measurement matrix).
    #[error("infeasible program: {0}")]
    Infeasible(String),

    /// Failure reading or writing experiment artifacts.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed configuration or result serialization.
    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
