//! Error type shared by the estimation kernels.

/// Errors surfaced by model construction, objective evaluation and the
/// smoother itself.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A matrix that must be symmetric positive definite failed its
    /// Cholesky factorization (non-positive pivot, exact sign test).
    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite {
        /// Which matrix failed, e.g. a covariance or a curvature block.
        context: String,
    },

    /// Incompatible dimensions between two quantities that must agree.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A scalar configuration or model parameter is outside its valid range.
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// The Armijo backtracking line search exhausted its budget without
    /// finding an acceptable step. The partial report (with the trace up to
    /// the failure) is attached for diagnosis.
    #[error("line search failed after {attempts} backtracking steps at iteration {iteration}")]
    LineSearchFailed {
        iteration: usize,
        attempts: usize,
        report: Box<crate::solver::SmootherReport>,
    },

    /// A Monte Carlo run could not be completed (simulation or smoothing
    /// failed, or the solver stopped without converging). Experiments fail
    /// loudly rather than dropping runs, which would bias the summaries.
    #[error("Monte Carlo run {run_index} failed: {message}")]
    RunFailed { run_index: usize, message: String },

    /// A one-shot smoothing run finished without reaching the convergence
    /// tolerance (iteration budget exhausted).
    #[error("solver did not converge: {message}")]
    NotConverged { message: String },

    /// Reading or writing a dataset, summary or series file failed.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A dataset or summary file could not be parsed or serialized.
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
