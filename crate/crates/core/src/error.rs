use thiserror::Error;

/// Errors raised by the library. Each variant names the offending input so
/// callers (and the CLI) can report it without further context.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty atom list")]
    EmptyMeasure,
    #[error("atom {index} has non-positive weight {weight}")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("weights sum to {sum}, off by more than 1e-9 from 1")]
    WeightSumOutOfTolerance { sum: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {field}")]
    NonFinite { field: &'static str },
    #[error("point {point:?} lies outside the ball of radius {radius}")]
    OutsideBall { point: Vec<f64>, radius: f64 },
    #[error("index {index} out of range (0..{len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("aggregate laws differ (max discrepancy {discrepancy})")]
    SumLawMismatch { discrepancy: f64 },
    #[error("point {x:?} lies outside the domain p·B (|x| = {norm}, bound {bound})")]
    XOutsideDomain { x: Vec<f64>, norm: f64, bound: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("matrix {index} is not symmetric positive definite")]
    NotPositiveDefinite { index: usize },
    #[error("sum of matrices is singular")]
    SingularSum,
    #[error("parameter {name} out of range: {reason}")]
    ParameterOutOfRange { name: &'static str, reason: String },
    #[error("LP solver failure: {0}")]
    SolverFailure(String),
    #[error("numerical breakdown in simplex: {0}")]
    NumericalBreakdown(String),
    #[error("malformed input: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
