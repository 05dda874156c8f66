//! Crate-level error type.

use thiserror::Error;

/// Errors produced by model construction, solvers and simulators.
#[derive(Debug, Error)]
pub enum Error {
    /// Model parameters violate a construction invariant.
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    /// An operation argument is outside its admissible domain.
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    /// The explicit scheme would be unstable on the requested grid.
    #[error("CFL violation: {msg} (ratio dt*beta^2/dz^2 = {ratio})")]
    Cfl { ratio: f64, msg: String },

    /// A numerical value left the admissible range during a computation.
    #[error("numerical failure in {op} at node (i={i}, j={j}): {msg}")]
    Numerical {
        op: &'static str,
        i: usize,
        j: usize,
        msg: String,
    },

    /// Grid specifications of two fields do not match.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// CSV import found malformed or inconsistent data.
    #[error("csv error: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;
