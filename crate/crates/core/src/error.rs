use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The caller handed us something outside an operation's domain.
    Precondition,
    /// A numerical routine failed to deliver its contract.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("input spans only the zero vector")]
    EmptySpan,

    #[error("kernel is trivial (matrix has full column rank)")]
    EmptyKernel,

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix has rank {rank} but {rows} rows; full row rank required")]
    RankDeficient { rank: usize, rows: usize },

    #[error("target vector lies outside the column span")]
    Infeasible,

    #[error("simplex stopped after {iterations} iterations (best bound {best_bound})")]
    SolverFailure { iterations: usize, best_bound: f64 },

    #[error("exact enumeration requested for k = {k} > {max}")]
    EnumerationTooLarge { k: usize, max: usize },

    #[error("estimate undefined: {0}")]
    Undefined(String),

    #[error("net audit failed: achieved covering radius {achieved} > epsilon {epsilon}")]
    CoverageFailure { achieved: f64, epsilon: f64 },

    #[error("net coverage violated at step {step}: nearest entry at distance {distance} > {epsilon}")]
    NetCoverageViolation { step: usize, distance: f64, epsilon: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("hypothesis fails for vector {index}: {detail}")]
    HypothesisFailure { index: usize, detail: String },

    #[error("sampling failed after {attempts} attempts (best norms {achieved:?})")]
    SamplingFailure { attempts: usize, achieved: Vec<f64> },

    #[error("internal contract violated: {0}")]
    Contract(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::SolverFailure { .. }
            | Error::CoverageFailure { .. }
            | Error::NetCoverageViolation { .. }
            | Error::SamplingFailure { .. }
            | Error::Contract(_) => ErrorClass::Numerical,
            _ => ErrorClass::Precondition,
        }
    }
}
