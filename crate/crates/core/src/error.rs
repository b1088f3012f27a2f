use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller violated a structural precondition (dimensions, ordering, indices).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The γ-synthetic objective needs a strictly positive weighted loss sum.
    #[error("degenerate objective: {0}")]
    DegenerateObjective(String),

    #[error("sampling failure: {failed} of {total} draws failed for {spec} on {dataset}")]
    SamplingFailure {
        failed: usize,
        total: usize,
        spec: String,
        dataset: String,
    },

    #[error("unstable robustness index for unit {unit}: {non_finite} of {total} log ratios are non-finite")]
    UnstableIndex {
        unit: usize,
        non_finite: usize,
        total: usize,
    },

    #[error("autocorrelation undefined for a constant series")]
    UndefinedAutocorrelation,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("csv error at row {row}, column '{column}': {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
