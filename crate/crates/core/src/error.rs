use thiserror::Error;

/// Errors raised by the numerical core and the scenario runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("measure space must contain at least one atom")]
    EmptySpace,

    #[error("weight {index} is {value}; weights must be finite and at least 1e-300")]
    InvalidWeight { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operands live on different measure spaces")]
    SpaceMismatch,

    #[error("invalid exponent {0}; exponents must lie in [1, inf]")]
    InvalidExponent(f64),

    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },

    #[error("element marked nonnegative has entry {index} = {value}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("invalid time {0}")]
    InvalidTime(f64),

    #[error("lambda = {lambda} is not in the resolvent set ({reason})")]
    NotInResolventSet { lambda: f64, reason: String },

    #[error("Euler step (I - tG/n) is singular for t = {t}, n = {n}")]
    EulerStepSingular { t: f64, n: usize },

    #[error("generator is not Metzler: entry ({row}, {col}) = {value}")]
    NotMetzler { row: usize, col: usize, value: f64 },

    #[error("jump kernel entry ({row}, {col}) = {value} is negative")]
    InvalidKernel { row: usize, col: usize, value: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scaling law violated at (t = {t}, n = {n}, l = {l}): deviation {deviation:e}")]
    ScalingLaw { t: f64, n: usize, l: usize, deviation: f64 },

    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },

    #[error("{path}: invalid field `{field}`: {message}")]
    Validation { path: String, field: String, message: String },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
