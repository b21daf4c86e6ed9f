use std::path::PathBuf;

use crate::dataset::GroupKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Config(String),

    #[error("empty dataset")]
    EmptyDataset,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("row {row}: label value `{value}` is not one of the two mapped values")]
    NonBinaryLabel { row: usize, value: String },
    #[error("row {row}: sensitive value `{value}` is not one of the two mapped values")]
    NonBinarySensitive { row: usize, value: String },
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumericFeature {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: missing cell")]
    MissingCell { row: usize, column: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("group {0} is empty")]
    EmptyGroup(GroupKey),
    #[error("stratum {0} is empty; disparity is undefined")]
    EmptyStratum(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSynthSpec(String),
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("noise rate {0} outside [0, 0.5]")]
    InvalidNoiseRate(f64),

    #[error("empty batch")]
    EmptyBatch,
    #[error("negative sample weight {0}")]
    NegativeWeight(f64),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid selection problem: {0}")]
    InvalidProblem(String),
    #[error("exhaustive search over {n} samples exceeds cap {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("empty selection")]
    EmptySelection,
    #[error("batch plan assigns {count} draws to empty group {group}")]
    EmptyGroupDraw { group: GroupKey, count: usize },
    #[error("batch size {0} is below the minimum of 4")]
    BatchTooSmall(usize),

    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training aborted at epoch {epoch}: {reason}")]
    Aborted { epoch: usize, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
