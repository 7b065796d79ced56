//! Crate-wide error type.
//!
//! Variants map onto the CLI exit codes: configuration problems exit with 2,
//! data problems with 3, and numeric aborts (non-finite loss) with 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad config file, unknown concept, bad flag combination.
    #[error("config error: {0}")]
    Config(String),

    /// Problems with input data: malformed manifests, empty splits, unreadable images.
    #[error("data error: {0}")]
    Data(String),

    /// A layer sequence whose shape chain is ill-formed.
    #[error("topology error: {0}")]
    Topology(String),

    /// An operation was called with arguments violating its contract (shape mismatch etc.).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Training produced a non-finite value.
    #[error("numeric abort: {0}")]
    Numeric(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Topology(_) | Error::Contract(_) => 3,
            Error::Numeric(_) => 4,
            Error::Io { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
