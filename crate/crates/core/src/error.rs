use thiserror::Error;

/// Errors produced by the clustering pipeline and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is singular even after regularization")]
    SingularMatrix,

    #[error("cluster {0} has no assigned points")]
    EmptyCluster(usize),

    #[error("fewer than two non-empty clusters")]
    SingleCluster,

    #[error("distance matrix has no positive off-diagonal entries")]
    DegenerateMatrix,

    #[error("malformed model file: {0}")]
    Malformed(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
