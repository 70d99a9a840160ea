use thiserror::Error;

/// Errors raised by the transform, the solvers and the evaluation harnesses.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BpaError {
    #[error("feature set needs at least {min} rows, got {got}")]
    TooFewRows { min: usize, got: usize },

    #[error("feature set needs at least one column")]
    EmptyDimension,

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("label count {labels} does not match row count {rows}")]
    LabelCount { labels: usize, rows: usize },

    #[error("row {0} has zero norm and cannot be normalized")]
    ZeroNormRow(usize),

    #[error("row {row} is not unit-normalized (norm {norm})")]
    NotNormalized { row: usize, norm: f64 },

    #[error("cost matrix diagonal is already masked")]
    AlreadyMasked,

    #[error("cost matrix must be masked before solving")]
    NotMasked,

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("cost matrix is not symmetric (|c_ij - c_ji| = {0})")]
    NotSymmetric(f64),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("kernel underflow in row {0}; use the log-domain solver or a smaller lambda")]
    NumericalUnderflow(usize),

    #[error("index out of range: {index} >= {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("indices must differ (got {0} twice)")]
    SameIndex(usize),

    #[error("n = {0} is too large for derangement enumeration (max 9)")]
    TooLarge(usize),

    #[error("lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("target dimension {target} exceeds min(n, d) = {max}")]
    InvalidTargetDim { target: usize, max: usize },

    #[error("cannot place {ways} centers with minimum separation {separation} in dimension {dim}")]
    SeparationInfeasible {
        ways: usize,
        dim: usize,
        separation: f64,
    },

    #[error("query {0} has no relevant item in the gallery")]
    NoRelevant(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, BpaError>;
