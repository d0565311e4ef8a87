use thiserror::Error;

/// Errors raised by mesh construction, discretization and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry on element {element}: {detail}")]
    Geometry { element: usize, detail: String },

    #[error("unsupported polynomial degree {degree} (supported: {supported})")]
    UnsupportedDegree { degree: usize, supported: &'static str },

    #[error("no quadrature rule of exactness {0} is available")]
    UnsupportedQuadrature(usize),

    #[error("edge {edge} is not incident to element {element}")]
    NotIncident { element: usize, edge: usize },

    #[error("block partition requires a structured mesh whose side count is divisible by p = {p}")]
    NotStructured { p: usize },

    #[error("factorization of the {rows}x{rows} {what} failed: {detail}")]
    Factorization {
        what: String,
        rows: usize,
        detail: String,
    },

    #[error("linear solve residual {residual:.3e} exceeds {limit:.1e} ({what})")]
    Residual {
        what: String,
        residual: f64,
        limit: f64,
    },

    #[error("generation mismatch: expected {expected}, found {found}")]
    GenerationMismatch { expected: usize, found: usize },

    #[error("mesh format error at line {line}: {detail}")]
    MeshFormat { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
