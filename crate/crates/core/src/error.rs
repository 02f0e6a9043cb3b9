use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("matrix is not a projector: {reason}")]
    NotProjector { reason: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),

    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),

    #[error("operators do not commute (commutator norm {norm:.3e})")]
    NonCommuting { norm: f64 },

    #[error("operators generate only the trivial algebra C1")]
    TrivialAlgebra,

    #[error("invalid context: {0}")]
    InvalidContext(String),

    #[error("closure exceeded cap of {cap} {what}")]
    CapExceeded { what: &'static str, cap: usize },

    #[error("context is not part of the poset")]
    UnknownContext,

    #[error("enumeration exceeded cap of {cap} candidates")]
    TooLarge { cap: usize },

    #[error("set is not downward closed (element {element} missing below {above})")]
    NotDownwardClosed { element: usize, above: usize },

    #[error("poset is not closed under the group action (element {element}, context {context})")]
    NotClosedUnderAction { element: usize, context: usize },

    #[error("presheaves live on different base posets")]
    BaseMismatch,

    #[error("value {0} is not on the r-grid")]
    GridMismatch(String),

    #[error("invalid r-grid: {0}")]
    InvalidGrid(String),

    #[error("rays do not form an orthonormal basis: {0}")]
    BadRays(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("scenario validation failed: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
