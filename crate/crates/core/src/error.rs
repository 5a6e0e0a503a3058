use std::path::PathBuf;

use fcdd_autodiff::AutodiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    /// A metric is undefined for the given population (e.g. a single class).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier for machine-readable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::Contract(_) => "config",
            Error::Data(_) | Error::Io { .. } => "data",
            Error::Numeric(_) => "numeric",
            Error::UndefinedMetric(_) => "metric",
        }
    }

    /// Process exit status: 2 configuration, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) => 2,
            Error::Data(_) | Error::Io { .. } | Error::UndefinedMetric(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

impl From<AutodiffError> for Error {
    fn from(e: AutodiffError) -> Self {
        match e {
            AutodiffError::NonFinite(_) => Error::Numeric(e.to_string()),
            AutodiffError::Shape { .. } | AutodiffError::NotScalar(_) => {
                Error::Config(e.to_string())
            }
        }
    }
}

/// Attaches a layer or record name to an error message.
pub(crate) trait Context<T> {
    fn context(self, what: impl std::fmt::Display) -> Result<T>;
}

impl<T, E: Into<Error>> Context<T> for std::result::Result<T, E> {
    fn context(self, what: impl std::fmt::Display) -> Result<T> {
        self.map_err(|e| match e.into() {
            Error::Config(m) => Error::Config(format!("{what}: {m}")),
            Error::Data(m) => Error::Data(format!("{what}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{what}: {m}")),
            Error::UndefinedMetric(m) => Error::UndefinedMetric(format!("{what}: {m}")),
            Error::Contract(m) => Error::Contract(format!("{what}: {m}")),
            io @ Error::Io { .. } => io,
        })
    }
}
