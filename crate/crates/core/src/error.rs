use thiserror::Error;

#[derive(Debug, Error)]
pub enum MsgrError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("indefinite operator: quadratic form {0:e}")]
    IndefiniteOperator(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("graph is disconnected: {} components with sizes {sizes:?}", sizes.len())]
    Disconnected { sizes: Vec<usize> },

    #[error("coordinates unavailable: {0}")]
    MissingCoordinates(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("subdomain {subdomain}: {message}")]
    Subdomain { subdomain: usize, message: String },

    #[error("infeasible local constraints for basis function (subdomain {subdomain}, aggregate {aggregate})")]
    InfeasibleConstraint { subdomain: usize, aggregate: usize },

    #[error("duplicate prolongation column (subdomain {subdomain}, aggregate {aggregate})")]
    DuplicateColumn { subdomain: usize, aggregate: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MsgrError>;
