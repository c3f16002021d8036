use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("stale or mismatched cache: {0}")]
    StaleCache(String),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate column `{0}`: fewer than two distinct values (declare it categorical)")]
    DegenerateColumn(String),

    #[error("table is empty after dropping {dropped} unparseable rows")]
    EmptyTable { dropped: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("privacy: {0}")]
    Privacy(String),

    #[error("checkpoint integrity: {0}")]
    Integrity(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
