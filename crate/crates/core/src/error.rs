use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero-norm vector (degenerate all-zero layer?)")]
    ZeroNorm,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty vector")]
    EmptyVector,

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("k-means needs at least k points: n={n}, k={k}")]
    TooFewPoints { n: usize, k: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("degenerate spectral embedding: all {rows} rows identical with {groups} groups requested")]
    DegenerateEmbedding { rows: usize, groups: usize },

    #[error("requested {groups} groups from {layers} layers")]
    TooManyGroups { groups: usize, layers: usize },

    #[error("empty group")]
    EmptyGroup,

    #[error("empty batch")]
    EmptyBatch,

    #[error("no clients")]
    NoClients,

    #[error("no updates to aggregate")]
    NoUpdates,

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("empty record list")]
    EmptyRecords,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig { .. } | Error::InvalidSchedule(_) | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
