use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("training diverged: {0}")]
    Training(String),
    #[error("evaluation error: {0}")]
    Eval(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("clustering error: {0}")]
    Clustering(String),
    #[error("storage error: {0}")]
    Storage(String),
}

impl Error {
    /// Short stable identifier, used for machine-parsable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Input(_) => "input",
            Error::Io(_) => "io",
            Error::Format(_) => "format",
            Error::Schema(_) => "schema",
            Error::Config(_) => "config",
            Error::Split(_) => "split",
            Error::Training(_) => "training",
            Error::Eval(_) => "eval",
            Error::Integrity(_) => "integrity",
            Error::Version { .. } => "version",
            Error::Clustering(_) => "clustering",
            Error::Storage(_) => "storage",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
