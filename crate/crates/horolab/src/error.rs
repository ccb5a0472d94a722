//! Error taxonomy shared by every module of the crate.

use thiserror::Error;

/// All fallible operations in this crate return `Result<_, HoroError>`.
///
/// The variants are deliberately coarse: callers branch on the *kind* of
/// failure (bad input, resource cap, structural obstruction), and the
/// message carries the specifics.
#[derive(Debug, Error)]
pub enum HoroError {
    /// A parameter is outside the documented domain of an operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A hard cap (node count, candidate count, iteration count) was hit.
    #[error("resource limit: {0}")]
    ResourceLimit(String),

    /// The input fails the annihilator condition of the flow transfer
    /// operator and therefore has no smooth primitive.
    #[error("not a coboundary: {0}")]
    NotACoboundary(String),

    /// The input fails the annihilator conditions of the time-one map
    /// transfer operator (non-vanishing at a multiplier zero).
    #[error("not a map coboundary: {0}")]
    NotAMapCoboundary(String),

    /// The requested invariant distribution is not defined at this
    /// parameter (mock-discrete series at frequency zero).
    #[error("undefined distribution: {0}")]
    UndefinedDistribution(String),

    /// A Sobolev index outside the supported (even) set was requested.
    #[error("unsupported index: {0}")]
    UnsupportedIndex(String),

    /// A check was invoked outside the regime where it is meaningful.
    #[error("out of regime: {0}")]
    OutOfRegime(String),

    /// The twisted quadrature was asked for frequency zero; the caller
    /// should use the untwisted path instead.
    #[error("use untwisted path: {0}")]
    UseUntwistedPath(String),

    /// Orbit times grew beyond the range where double precision keeps
    /// the requested accuracy.
    #[error("precision limit: {0}")]
    PrecisionLimit(String),

    /// An internal invariant was violated (reduction non-termination,
    /// integer overflow in exact arithmetic, ...).
    #[error("internal error: {0}")]
    InternalError(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HoroError>;
