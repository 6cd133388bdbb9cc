use thiserror::Error;

/// Errors produced by the spin-thimble library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Hilbert space dimension {dimension} exceeds the cap of {cap}")]
    DimensionCap { dimension: usize, cap: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    /// `|1 + x² + y²|` fell below the singular guard.
    #[error("configuration hit the action singularity (|1+x²+y²| = {proximity:e}) at site {site}, slice {slice}")]
    Singular {
        site: usize,
        slice: usize,
        proximity: f64,
    },

    #[error("flow produced a non-finite state")]
    NonFinite,

    #[error("reweighting denominator vanished (|<e^(iθ)>| = {0:e})")]
    VanishingPhase(f64),

    #[error("unsupported Hamiltonian for this method: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
