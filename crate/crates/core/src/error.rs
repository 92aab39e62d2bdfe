use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("non-finite entry in the density matrix at t = {t}")]
    NonFinite { t: f64 },

    #[error("positivity violated at t = {t}: smallest eigenvalue {min_eigenvalue:e}")]
    Positivity { t: f64, min_eigenvalue: f64 },

    #[error("trace drifted by {drift:e} at t = {t}")]
    TraceDrift { t: f64, drift: f64 },

    #[error("hermiticity lost at t = {t}: max deviation {deviation:e}")]
    Hermiticity { t: f64, deviation: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Eigensolver(_)
                | Error::Quadrature(_)
                | Error::NonFinite { .. }
                | Error::Positivity { .. }
                | Error::TraceDrift { .. }
                | Error::Hermiticity { .. }
        )
    }
}
