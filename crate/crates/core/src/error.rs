use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad parameters, unsupported kind/dimension combinations, malformed specs.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("conditioning event ({a}, {b}] has zero probability")]
    EmptyConditioning { a: f64, b: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Input violates a precondition of an operation (e.g. non-centered target).
    #[error("validation error: {0}")]
    Validation(String),

    /// Internal bookkeeping went wrong. Always a bug.
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("column {column} has a degenerate range (all values equal {value})")]
    DegenerateRange { column: String, value: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
