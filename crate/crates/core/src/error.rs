use thiserror::Error;

/// Coarse error category; the CLI maps each category to an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or inconsistent input.
    Config,
    /// A numerical routine failed or produced an inconsistent result.
    Numeric,
    /// A structural hypothesis of the model does not hold for the given input.
    Hypothesis,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate lattice: {0}")]
    DegenerateLattice(String),

    #[error("plane-wave basis would contain {size} vectors, above the limit of {max}")]
    BasisTooLarge { size: usize, max: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("eigensolver failed at k = {k:?}: {reason}")]
    Eigensolver { k: Vec<f64>, reason: String },

    #[error("degeneracy detection failed: {0}")]
    Degeneracy(String),

    #[error("band separation violated at k = {k:?}, band {band}: {detail}")]
    SeparationViolated { k: Vec<f64>, band: usize, detail: String },

    #[error("velocity is ill-defined: {0}")]
    IllDefinedVelocity(String),

    #[error("velocity estimates disagree: inner product {inner:?} vs finite difference {fd:?}")]
    VelocityMismatch { inner: Vec<f64>, fd: Vec<f64> },

    #[error("not a Dirac point: relative anisotropy {anisotropy:.3e} exceeds {tol:.3e}")]
    NotDirac { anisotropy: f64, tol: f64 },

    #[error("contour collision: eigenvalue {eigenvalue} lies within {tol:e} of the contour")]
    ContourCollision { eigenvalue: f64, tol: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidInput(_)
            | Error::Config(_)
            | Error::DegenerateLattice(_)
            | Error::BasisTooLarge { .. }
            | Error::GridMismatch(_) => ErrorKind::Config,
            Error::Eigensolver { .. }
            | Error::VelocityMismatch { .. }
            | Error::ContourCollision { .. }
            | Error::Numeric(_) => ErrorKind::Numeric,
            Error::Degeneracy(_)
            | Error::SeparationViolated { .. }
            | Error::IllDefinedVelocity(_)
            | Error::NotDirac { .. }
            | Error::HypothesisViolation(_) => ErrorKind::Hypothesis,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
