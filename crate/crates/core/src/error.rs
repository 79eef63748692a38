use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sample {sample} has fewer than 2 observed sites in window {window}")]
    TooFewObserved { sample: String, window: usize },

    #[error("missing value at site {site} in window {window} (impute first)")]
    MissingValue { site: usize, window: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("population control failed at window {window}: {msg}")]
    PopulationControl { window: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit status for the CLI: 2 for bad input/config, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Config(_) | Error::Parse { .. } => 2,
            _ => 1,
        }
    }
}
