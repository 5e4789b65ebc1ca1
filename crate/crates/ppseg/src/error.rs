use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed input data; `offset` is a byte position when known.
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ppseg_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    /// 2 for configuration problems, 3 for bad or missing data, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Core(e) => match root(e) {
                ppseg_core::Error::Config(_) => 2,
                ppseg_core::Error::Usage(_) | ppseg_core::Error::Dimension { .. } => 3,
                _ => 1,
            },
            Error::Io { .. } | Error::Format { .. } | Error::Csv(_) => 3,
        }
    }
}

fn root(e: &ppseg_core::Error) -> &ppseg_core::Error {
    match e {
        ppseg_core::Error::Stage { source, .. } => root(source),
        e => e,
    }
}
