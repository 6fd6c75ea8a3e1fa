use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("cannot encode image {path}: {message}")]
    Encode { path: PathBuf, message: String },

    #[error("image has zero width or height")]
    EmptyImage,

    #[error("image {width}x{height} is smaller than the {kernel}-pixel blur kernel")]
    ImageTooSmall {
        width: usize,
        height: usize,
        kernel: usize,
    },

    #[error("foreground extraction failed for {0}: no enclosed region")]
    ExtractionFailed(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty mask: no foreground pixels")]
    EmptyMask,

    #[error("training diverged at epoch {epoch}: non-finite value encountered")]
    TrainingDiverged { epoch: usize },

    #[error("empty data set: {0}")]
    EmptyDataSet(String),

    #[error("{0}")]
    OverlappingSets(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("unknown {task} label `{label}`")]
    UnknownLabel { task: String, label: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("class {label} has {available} items, split needs {requested}")]
    InsufficientClass {
        label: String,
        available: usize,
        requested: usize,
    },

    #[error("item `{0}` has no hour-1 benchmark record")]
    MissingBenchmark(String),

    #[error("item `{item}` has conflicting hour-1 labels")]
    ConflictingBenchmark { item: String },

    #[error("model file: {0}")]
    Model(String),

    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl std::fmt::Display, source: csv::Error) -> Self {
        // Surface line numbers from the csv position when available.
        let line = source.position().map(|p| p.line());
        match (line, source.kind()) {
            (Some(line), csv::ErrorKind::Deserialize { err, .. }) => Error::Parse {
                path: path.to_string(),
                line,
                message: err.to_string(),
            },
            _ => Error::Csv {
                path: path.to_string(),
                source,
            },
        }
    }

    pub(crate) fn mismatch(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
