use thiserror::Error;

/// Errors surfaced by construction, transforms, and the numeric engines.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor argument violates one of the family constraints.
    /// The message names the violated inequality.
    #[error("parameter violates {constraint}: {detail}")]
    InvalidParameter { constraint: String, detail: String },

    /// Tail integral diverges, so the requested normalizer does not exist.
    #[error("tail is not integrable: {0}")]
    NonIntegrable(String),

    /// Exponential moment M_gamma(F) diverges.
    #[error("moment generating integral diverges for gamma = {gamma}")]
    DivergentMgf { gamma: f64 },

    /// Quadrature could not certify the requested relative tolerance.
    #[error("quadrature failed to reach rel_tol {rel_tol:.3e}: certified {achieved:.3e}")]
    QuadratureFailure { rel_tol: f64, achieved: f64 },

    /// A local window (x, x+T] with a nonpositive length or an invalid h(x).
    #[error("invalid window: {0}")]
    InvalidWindow(String),

    /// Lattice convolution would exceed its cell or memory budget.
    #[error("lattice budget exceeded: {0}")]
    BudgetExceeded(String),

    /// Monte Carlo produced a degenerate estimate (no ascents, or all ascents).
    #[error("degenerate simulation: {0}")]
    Degenerate(String),

    /// A diagnostic needed by this operation is unavailable or diverged.
    #[error("diagnostic unavailable: {0}")]
    DiagnosticUnavailable(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_parameter(constraint: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::InvalidParameter {
            constraint: constraint.into(),
            detail: detail.into(),
        }
    }
}
