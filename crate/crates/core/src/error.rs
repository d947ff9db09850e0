use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural parameter (count, order, degree) is invalid.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// Two objects were built on different quadratures.
    #[error("objects live on different quadratures")]
    QuadratureMismatch,

    /// A linear system required to be invertible is numerically singular.
    #[error("singular system: {0}")]
    Singular(String),

    /// An operator expected to be a positive contraction has spectrum outside [0, 1].
    #[error("operator is not a positive contraction (eigenvalue {0:e})")]
    NonContraction(f64),

    /// Adding the perturbation did not increase the rank as required.
    #[error("subspace collapse: joint rank {joint} < {expected}")]
    Collapse { joint: usize, expected: usize },

    /// Window masks are not nested, overlap the base set, or overlap each other.
    #[error("mask error: {0}")]
    Mask(String),

    /// The quantity is undefined for this parameter value.
    #[error("undefined: {0}")]
    Undefined(String),
}

impl Error {
    /// Whether the error came from a numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_) | Error::NonContraction(_) | Error::Collapse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
