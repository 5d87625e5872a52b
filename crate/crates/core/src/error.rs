use alloc::string::String;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid transition kernel: {0}")]
    InvalidKernel(String),
    #[error("chain is not ergodic ({unit_modulus} eigenvalues of unit modulus)")]
    NonErgodic { unit_modulus: usize },
    #[error("worst-pair total variation still above {threshold} after {cap} steps")]
    NotMixedWithinCap { cap: usize, threshold: f64 },
    #[error("linear system is singular (smallest singular value {min_singular:e})")]
    SingularSystem { min_singular: f64 },
    #[error("operator is not contractive: kappa = {kappa} >= 1")]
    Unstable { kappa: f64 },
    #[error("autoregression is unstable: companion spectral radius {spectral_radius} >= 1")]
    UnstableSystem { spectral_radius: f64 },
    #[error("feature second-moment matrix is degenerate (min eigenvalue {min_eigenvalue:e})")]
    DegenerateFeatures { min_eigenvalue: f64 },
    #[error("iterate norm exceeded {guard:e} at step {step}; stepsize is unstable")]
    NumericalBlowup { step: usize, guard: f64 },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Coarse classification used for machine-readable error reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Ergodicity,
    Numerical,
    Data,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Input => "input",
            ErrorCategory::Ergodicity => "ergodicity",
            ErrorCategory::Numerical => "numerical",
            ErrorCategory::Data => "data",
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidKernel(_) | Error::DimensionMismatch(_) | Error::InvalidArgument(_) => {
                ErrorCategory::Input
            }
            Error::NonErgodic { .. } | Error::NotMixedWithinCap { .. } => ErrorCategory::Ergodicity,
            Error::InsufficientData { .. } => ErrorCategory::Data,
            Error::SingularSystem { .. }
            | Error::Unstable { .. }
            | Error::UnstableSystem { .. }
            | Error::DegenerateFeatures { .. }
            | Error::NumericalBlowup { .. } => ErrorCategory::Numerical,
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
