use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("column `{0}` is missing from the CSV header")]
    MissingColumn(String),

    #[error("no valid rows after parsing ({dropped} dropped)")]
    NoValidRows { dropped: usize },

    #[error("degenerate column: {0}")]
    DegenerateColumn(String),

    #[error("dataset too small for a viable split: {0}")]
    UnviableSplit(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("estimation failure: {0}")]
    EstimationFailure(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("malformed linear program: {0}")]
    MalformedLp(String),

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("treatment probability unavailable: {infeasible} of {total} trees are infeasible at this constraint point")]
    ProbabilityUnavailable { infeasible: usize, total: usize },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
