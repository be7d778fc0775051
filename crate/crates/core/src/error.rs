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

    #[error("parse error at record {record}: {message}")]
    Parse { record: usize, message: String },

    #[error("ray {index} violates cloud invariant: {message}")]
    InvalidRay { index: usize, message: String },

    #[error("{count} measurement(s) rejected as non-finite or malformed")]
    InvalidMeasurements { count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("statistics undefined: {0}")]
    Undefined(String),

    #[error("image encoding failed: {0}")]
    Image(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown experiment {name:?}; valid experiments: {}", valid.join(", "))]
    UnknownExperiment { name: String, valid: Vec<&'static str> },
}

impl Error {
    /// Wraps an error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
