use std::path::PathBuf;

use crate::config::ConfigError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },

    #[error("{file}: missing required column `{column}`")]
    MissingColumn { file: String, column: &'static str },

    #[error("duplicate listing: keyword {keyword}, timestamp {timestamp}, position {position}")]
    DuplicatePosition {
        keyword: String,
        timestamp: String,
        position: u32,
    },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Model(#[from] searchbid_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(file: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv {
            file: file.into(),
            source,
        }
    }

    /// Errors caused by the user's input rather than the run itself.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
