use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("intervals have unequal lengths ({left} vs {right})")]
    UnequalIntervals { left: f64, right: f64 },

    #[error("unsupported spectrum shape: {0}")]
    UnsupportedShape(String),

    #[error("invalid cycle parameters: {0}")]
    InvalidParams(String),

    #[error("momentum must be strictly positive for the trace formula")]
    InvalidMomentum,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear program is unbounded (spectrum touches zero?)")]
    Unbounded,

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("no step-size cycle found (best residual {residual:.3e})")]
    NoSolutionFound { residual: f64 },

    #[error("certification failed: sup |sigma| = {sigma_star} exceeds 1")]
    CertificationFailed { sigma_star: f64 },

    #[error("non-finite value encountered")]
    NonFinite,

    #[error("objective is not quadratic")]
    NotQuadratic,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("matrix is not symmetric (asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("labels must be +1 or -1")]
    BadLabels,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    Timeout { iterations: usize, grad_norm: f64 },
}

impl Error {
    /// True for failures of the numerical pipeline itself, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoSolutionFound { .. }
                | Error::CertificationFailed { .. }
                | Error::NonFinite
                | Error::Timeout { .. }
                | Error::Unbounded
                | Error::Infeasible
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
