use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
///
/// The CLI maps [`Error::Usage`] to exit code 2 and everything else to 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes or channel counts that cannot be combined.
    #[error("structural error: {0}")]
    Structural(String),

    /// Non-finite values in inputs, gradients or losses.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A precondition of the caller was violated.
    #[error("usage error: {0}")]
    Usage(String),

    /// A metric is undefined for the given input (e.g. FPR without negatives).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: schema error for pump '{pump_id}': {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        pump_id: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefixes the message of message-only variants, keeping the kind.
    pub fn context(self, prefix: &str) -> Self {
        match self {
            Error::Structural(m) => Error::Structural(format!("{prefix}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{prefix}: {m}")),
            Error::Usage(m) => Error::Usage(format!("{prefix}: {m}")),
            Error::UndefinedMetric(m) => Error::UndefinedMetric(format!("{prefix}: {m}")),
            other => other,
        }
    }

    /// True for errors caused by bad caller input rather than runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Usage(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
