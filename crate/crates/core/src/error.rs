use thiserror::Error;

/// Errors surfaced by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its documented domain (Hurst window, spectra, exponents, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A requested time does not lie on the sampling grid, or two grids disagree.
    /// Pathwise calculus here never interpolates silently.
    #[error("grid misalignment: {0}")]
    GridMisaligned(String),

    /// A shift, scaling or pullback asked for path values outside the sampled window.
    #[error("path support exceeded: {0}")]
    SupportExceeded(String),

    /// NaN or infinity appeared during a solve; `step` is the time-step index.
    #[error("non-finite value at step {step}: {context}")]
    NonFinite { step: usize, context: String },

    /// An iteration (Picard, pullback) did not reach its tolerance.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
