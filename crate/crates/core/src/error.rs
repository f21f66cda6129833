//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A row of a candidate mixing matrix does not sum to 1 within tolerance.
    #[error("row {row} sums to 1{residual:+e} (|residual| exceeds tolerance)")]
    RowSumViolation { row: usize, residual: f64 },

    /// A column of a candidate mixing matrix does not sum to 1 within tolerance.
    #[error("column {col} sums to 1{residual:+e} (|residual| exceeds tolerance)")]
    ColSumViolation { col: usize, residual: f64 },

    /// An entry of a candidate mixing matrix is negative beyond tolerance.
    #[error("entry ({row}, {col}) = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    /// An entry of a candidate mixing matrix exceeds 1 beyond tolerance.
    #[error("entry ({row}, {col}) = {value} exceeds 1")]
    EntryAboveOne { row: usize, col: usize, value: f64 },

    /// The alternating ring topology needs an even node count.
    #[error("alternating ring requires an even number of nodes, got {n}")]
    OddNForAlternatingRing { n: usize },

    /// An even node count is required (two-cluster mean estimation).
    #[error("mean estimation requires an even number of nodes, got {n}")]
    OddN { n: usize },

    /// Iterative eigenvalue computation hit its iteration cap.
    #[error(
        "eigenvalue iteration did not converge within {iterations} iterations \
         (last estimate {last_estimate}, residual {residual:e})"
    )]
    NoConvergence {
        iterations: usize,
        last_estimate: f64,
        residual: f64,
    },

    /// A cost matrix entry is NaN or infinite.
    #[error("cost matrix entry ({row}, {col}) = {value} is not finite")]
    NonFiniteCost { row: usize, col: usize, value: f64 },

    /// Operand shapes do not agree.
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// Frank-Wolfe was given a zero iteration budget.
    #[error("iteration budget must be at least 1")]
    InvalidBudget,

    /// The mixing parameter is required to be strictly positive.
    #[error("mixing parameter p must be in (0, 1], got {p}")]
    ZeroP { p: f64 },

    /// Stepsize tuning needs d > 0.
    #[error("stepsize tuning requires d > 0, got {d}")]
    NonPositiveD { d: f64 },

    /// A stochastic oracle failed to produce a sample.
    #[error("sampling failure: {0}")]
    SamplingFailure(String),

    /// Catch-all precondition violation.
    #[error("{0}")]
    InvalidArgument(String),

    /// Matrix file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    MatrixParse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
