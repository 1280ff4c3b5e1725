use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("unsupported signal format {0}")]
    UnsupportedFormat(String),

    #[error("invalid segment: {0}")]
    InvalidSegment(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no normal beats in the first {train_minutes} minutes of record {patient_id}")]
    EmptyTrainingSet { patient_id: String, train_minutes: f64 },

    #[error("invalid training set: {0}")]
    InvalidTrainingSet(String),

    #[error("beat symbol {0:?} has no AAMI class")]
    UnmappedSymbol(String),

    #[error("dictionary is rank deficient (rank {rank} < {atoms} atoms)")]
    RankDeficient { rank: usize, atoms: usize },

    #[error("morphology transform diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Bincode(#[from] bincode::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
