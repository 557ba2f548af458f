use std::path::PathBuf;

use thiserror::Error;

use crate::calibration::CalibrationStep;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("too few measurements: {columns} parameters need at least {required} poses, got {have}")]
    TooFewMeasurements {
        columns: usize,
        required: usize,
        have: usize,
    },

    #[error("parameters not identifiable: deficient columns {deficient:?}")]
    NotIdentifiable { deficient: Vec<usize> },

    #[error("ill-conditioned model: {0}")]
    IllConditioned(String),

    #[error("calibration diverged after {} iterations", history.len())]
    NonConvergence { history: Vec<CalibrationStep> },

    #[error("measurement rig failed at iteration {iteration}: {source}")]
    Rig {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

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
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
