use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(
        "simplex {simplex} references vertex {vertex}, but the mesh has {n_vertices} vertices"
    )]
    IndexOutOfRange {
        simplex: usize,
        vertex: usize,
        n_vertices: usize,
    },

    #[error("simplex {0} is degenerate (zero measure)")]
    DegenerateSimplex(usize),

    #[error("mesh is not edge-connected ({components} components)")]
    Disconnected { components: usize },

    #[error("anisotropy tensor on triangle {0} is not symmetric positive definite")]
    NotSpdTensor(usize),

    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {0} lies outside the mesh domain")]
    ExteriorPoint(usize),

    #[error("size cap exceeded: {size} > {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("no feasible hyperparameter value")]
    NoFeasibleTheta,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}
