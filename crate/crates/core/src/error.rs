use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("no data rows")]
    EmptyData,

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("covariance is singular (smallest/largest eigenvalue = {ratio:e})")]
    SingularCovariance { ratio: f64 },

    #[error("all samples equal {0}; a continuous distribution cannot represent a point mass")]
    DegenerateSupport(f64),

    #[error("unknown category `{value}` for column `{column}`")]
    UnknownCategory { column: String, value: String },

    #[error("evidence has zero probability under every leaf")]
    InconsistentEvidence,

    #[error("only {accepted} of {drawn} draws satisfied the evidence")]
    InsufficientAcceptance { accepted: usize, drawn: usize },

    #[error("unsupported model schema version {0}")]
    SchemaVersion(u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
