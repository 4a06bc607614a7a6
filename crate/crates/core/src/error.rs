use thiserror::Error;

/// Errors produced anywhere in the encode / solve / recover pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix market format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("unsupported matrix market variant: {0}")]
    UnsupportedFormat(String),

    #[error("index ({row}, {col}) out of bounds for a {n_rows}x{n_cols} matrix")]
    Bounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("matrix is not symmetric: entry ({row}, {col}) differs from its transpose")]
    NotSymmetric { row: usize, col: usize },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("fault capacity exceeded: {faulty} faulty components but only k = {k} tolerated")]
    FaultCapacity { faulty: usize, k: usize },

    #[error("invalid fault plan: {0}")]
    InvalidPlan(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unrecoverable fault set: columns {0:?} of E^T are linearly dependent")]
    Unrecoverable(Vec<usize>),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("right-hand side has zero norm; absolute residual is {absolute}")]
    ZeroRhs { absolute: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 1 configuration/input error, 2 numerical failure,
    /// 3 unrecoverable fault set.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::ZeroRhs { .. } => 2,
            Error::Unrecoverable(_) => 3,
            _ => 1,
        }
    }
}
