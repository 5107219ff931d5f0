use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is outside its allowed range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input data violates a structural invariant (ordering, symmetry, labeling...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A computation produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The link model was evaluated outside its validity region (1 + c·K ≤ 0 and similar).
    #[error("model domain violation: {0}")]
    ModelDomain(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid start point: {0}")]
    InvalidStart(String),

    /// Malformed tabular input; `row` is the 1-based data row (header excluded).
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
