use thiserror::Error;

/// Errors produced by grid construction, operators, and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("functions live on different grids")]
    GridMismatch,

    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("input must have zero average: integral {integral:e} exceeds tolerance {tolerance:e}")]
    NonZeroAverage { integral: f64, tolerance: f64 },

    #[error("linear case pq = 1 unsupported")]
    LinearCase,

    #[error("exponents (p, q) = ({p}, {q}) violate subcriticality in dimension {dimension}")]
    Supercritical { p: f64, q: f64, dimension: u32 },

    #[error("{operation} unsupported on {domain} domains")]
    UnsupportedDomain {
        operation: &'static str,
        domain: &'static str,
    },

    #[error("pair not projectable onto the Nehari set: coupling T = {coupling:e} is not positive")]
    NotProjectable { coupling: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
