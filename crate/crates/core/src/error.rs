//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors reported by lattice construction, reduction, link and numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Matrix or tensor shapes do not fit together.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Two placements of the same layer act on overlapping qudits.
    #[error("overlapping placements in layer {layer} at bond {bond}")]
    OverlappingPlacement { layer: usize, bond: usize },

    /// A placement refers to a bond or site outside the cell.
    #[error("placement out of range in layer {layer}: {detail}")]
    PlacementOutOfRange { layer: usize, detail: String },

    /// A dense object would exceed the configured size budget.
    #[error("dimension {dim} exceeds the dense budget of {limit}")]
    DimensionOverflow { dim: u128, limit: u128 },

    /// A name that is not part of the builtin library.
    #[error("unknown lattice `{0}`")]
    UnknownLattice(String),

    /// A parameter outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Worldline tracing did not find a recurrent state.
    #[error("no worldline recurrence within {0} layers")]
    NoRecurrence(usize),

    /// An operation that requires complete reducibility met a stuck diagram.
    #[error("diagram is stuck (not completely reducible) at m={m}, n={n}")]
    NotReducible { m: usize, n: usize },

    /// An exhaustive computation would exceed its budget.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// Malformed text input (lattice description language, link codes).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A correlation function was requested for an operator with non-zero trace.
    #[error("operator is not traceless (trace = {0:e})")]
    NotTraceless(f64),

    /// The channel backend was asked for a point not connected by a worldline.
    #[error("point (x = {x}, t = {t}) is not connected to the origin by a worldline")]
    OffWorldline { x: i64, t: usize },

    /// An out-of-time-order decay rate was requested outside the butterfly cone.
    #[error("velocity {0} lies outside the butterfly cone")]
    OutsideButterflyCone(String),

    /// A flow density whose integral differs from one.
    #[error("density is not normalised: integral = {0}")]
    Unnormalized(f64),

    /// Serialization or deserialization failure.
    #[error("serialization error: {0}")]
    Serde(String),

    /// A violated internal invariant; indicates a bug rather than bad input.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
