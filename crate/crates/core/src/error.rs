use thiserror::Error;

/// Errors shared by every module of this crate.
#[derive(Debug, Error)]
pub enum OpaveError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("matrix is not symmetric: max asymmetry {asymmetry:.3e} exceeds {tolerance:.3e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },
    #[error("operator is not positive semidefinite: min eigenvalue {eig_min:.3e}")]
    NotPsd { eig_min: f64 },
    #[error("singular operator: min eigenvalue {eig_min:.3e}")]
    Singular { eig_min: f64 },
    #[error("unsupported metric: {0}")]
    UnsupportedMetric(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("schedule violation at iteration {k}: {reason}")]
    ScheduleViolation { k: usize, reason: String },
    #[error("invalid step certificate: {0}")]
    CertificateInvalid(String),
    #[error("iterate diverged at iteration {k} (norm {norm:.3e})")]
    Divergence { k: usize, norm: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("eigendecomposition failed to converge after {0} sweeps")]
    EigNoConvergence(usize),
}

pub type Result<T> = std::result::Result<T, OpaveError>;
