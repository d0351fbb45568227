use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero vector: feature has no nonzero entry")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in feature vector")]
    NonFinite,

    #[error("format error: {0}")]
    Format(String),

    #[error("class ids are not contiguous: id {missing} is absent below {max}")]
    LabelGap { missing: u32, max: u32 },

    #[error("infeasible protocol: {0}")]
    InfeasibleProtocol(String),

    #[error("class {class} has {available} train samples, {required} shots required")]
    InsufficientShots {
        class: u32,
        available: usize,
        required: usize,
    },

    #[error("class {0} has no samples")]
    EmptyClass(u32),

    #[error("class {0} is already present in the bank")]
    DuplicateClass(u32),

    #[error("class {0} is not present in the bank")]
    UnknownClass(u32),

    #[error("empty sample set")]
    EmptySampleSet,

    #[error("classifier bank is empty")]
    EmptyBank,

    #[error("banks cover different class sets")]
    BankMismatch,

    #[error("fusion weight {lambda} outside [{lo}, {hi}]")]
    LambdaOutOfRange { lambda: f64, lo: f64, hi: f64 },

    #[error("inter-class fusion requires two distinct samples")]
    SelfFusion,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("session result has no samples")]
    EmptyResult,

    #[error("session {0} missing from report sequence")]
    MissingSession(usize),

    #[error("selection matched no records")]
    EmptySelection,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
