use std::path::PathBuf;

use crate::session::ChannelKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing channel {0:?}")]
    MissingChannel(ChannelKind),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("not enough samples: need {needed}, have {available}")]
    NotEnoughSamples { needed: usize, available: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("failed to write session to {path}: {source}")]
    SessionWrite {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("split error: {0}")]
    Split(String),

    #[error("training diverged at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(format!($($arg)*))
    };
}

macro_rules! validation_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Validation(format!($($arg)*))
    };
}

pub(crate) use shape_err;
pub(crate) use validation_err;
