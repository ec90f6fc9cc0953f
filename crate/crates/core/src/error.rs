use thiserror::Error;

use crate::exprdsl::{EvalError, ParseError};

/// Errors produced by the lattice solvers and transforms.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("lattice functions live on different grids")]
    GridMismatch,
    #[error("index {index} out of range (lattice depth {depth})")]
    OutOfRange { index: usize, depth: usize },
    #[error("{what} did not converge: last term magnitude {magnitude:e}")]
    NonConverged { what: &'static str, magnitude: f64 },
    #[error("domain error at lattice index {index}: {what}")]
    Domain { index: usize, what: String },
    #[error("movable pole between lattice indices {index} and {}", index + 1)]
    MovablePole { index: usize },
    #[error("degenerate cross-ratio at lattice index {index}: coincident values")]
    DegenerateRatio { index: usize },
    #[error("value overflow at lattice index {index}")]
    Overflow { index: usize },
    #[error("seed does not solve the Riccati equation: residual {residual:e} at index {index}")]
    InvalidSeed { index: usize, residual: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("chain stage {stage}: {source}")]
    Stage { stage: usize, source: Box<Error> },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{source} (lattice index {index})")]
    Sample { index: usize, source: EvalError },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, Error>;
