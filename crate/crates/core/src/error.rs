use std::path::PathBuf;

use thiserror::Error;

use crate::ClassId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("{what} contains a non-finite value")]
    NonFinite { what: &'static str },

    #[error("negative score {value} at index {index}")]
    NegativeScore { index: usize, value: f64 },

    #[error("leave-one-out needs at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error("{rows} rows but {labels} labels")]
    LabelCountMismatch { rows: usize, labels: usize },

    #[error("query class {0} has no support samples")]
    MissingSupportClass(ClassId),

    #[error("need {needed} classes, dataset `{dataset}` has {available}")]
    NotEnoughClasses {
        dataset: String,
        needed: usize,
        available: usize,
    },

    #[error("class {class} of dataset `{dataset}` has {available} samples, episode needs {needed}")]
    NotEnoughSamples {
        dataset: String,
        class: ClassId,
        needed: usize,
        available: usize,
    },

    #[error("non-finite loss at training step {step}")]
    NonFiniteLoss { step: usize },

    #[error("parameter shape mismatch in layer {layer}")]
    ShapeMismatch { layer: usize },

    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("class split: {0}")]
    InvalidSplit(String),

    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: u64, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
