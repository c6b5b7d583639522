use thiserror::Error;

use crate::continuity::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wavevector {wavevector:?} aliases on a grid with {points} points per axis (limit {limit})")]
    AliasedWavevector {
        wavevector: Vec<i32>,
        points: usize,
        limit: usize,
    },

    #[error("metric leaves the Kähler cone: minimum eigenvalue {min_eigenvalue:e}")]
    NotPositive { min_eigenvalue: f64 },

    #[error("incompatible source: weighted mean {mean:e} exceeds allowance {allowed:e}")]
    IncompatibleSource { mean: f64, allowed: f64 },

    #[error("linear solve did not converge after {iterations} iterations (residual {residual:e}, target {target:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("fixed-point iteration diverged: {reason}")]
    Diverged {
        reason: String,
        report: Box<SolveReport>,
    },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config (line {line}): {message}")]
    InvalidConfig { line: usize, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
