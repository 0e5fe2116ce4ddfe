use thiserror::Error;

/// Errors raised by the matrix kernel, the LQR evaluators, the Riccati
/// oracle and the policy iterations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    AsymmetricInput { asymmetry: f64 },

    #[error("dimension mismatch for {what}: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("invalid problem instance: {0}")]
    InvalidInstance(String),

    #[error("matrix is not Schur stable (spectral radius {rho})")]
    Unstable { rho: f64 },

    #[error("ill-conditioned linear system: {0}")]
    IllConditioned(String),

    #[error("gain is not stabilizing (spectral radius {rho})")]
    NotStabilizing { rho: f64 },

    #[error("curvature matrix R + B'XB is not positive definite (smallest eigenvalue {lambda_min:.3e})")]
    NonPositiveCurvature { lambda_min: f64 },

    #[error("curvature matrix R + B'XB is singular")]
    SingularCurvature,

    #[error("NoStabilizingSeed: initial gain is not stabilizing (spectral radius {rho})")]
    NoStabilizingSeed { rho: f64 },

    #[error("CertificateFailure: {0}")]
    CertificateFailure(String),

    #[error("MaxIterExceeded: no convergence after {iterations} iterations")]
    MaxIterExceeded { iterations: usize },

    #[error("SamplingFailure: could not draw stabilizing samples after {attempts} attempts")]
    SamplingFailure { attempts: usize },

    #[error("degenerate gradient direction: B N Y vanishes with N nonzero")]
    DegenerateDirection,

    #[error("step left the stabilizing set (spectral radius {rho})")]
    LeftStabilityRegion { rho: f64 },

    #[error("StabilityLost at iteration {iteration}: {diagnostics}")]
    StabilityLost {
        iteration: usize,
        diagnostics: String,
    },

    #[error("InsufficientData: need at least {needed} positive error samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
