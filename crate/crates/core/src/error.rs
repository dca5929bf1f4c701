use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("record {index} references unknown member `{member_id}`")]
    UnknownMember { index: usize, member_id: String },

    #[error("invalid generator spec: {field} {reason}")]
    InvalidSpec { field: &'static str, reason: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("{members} members exceeds the exact-enumeration limit of {limit}; use a sampling method")]
    Capacity { members: usize, limit: usize },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
