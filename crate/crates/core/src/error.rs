use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A malformed or contract-violating input row. `row` is the 1-based line
    /// number in the source file (the header is line 1).
    #[error("row {row}: {message}")]
    Row { row: u64, message: String },

    #[error("unknown province '{name}' at row {row}")]
    UnknownProvince { name: String, row: u64 },

    #[error("month gap in province '{province}': {before} is followed by {after}")]
    Gap {
        province: String,
        before: String,
        after: String,
    },

    #[error("coverage: {0}")]
    Coverage(String),

    #[error("precondition: {0}")]
    Precondition(String),

    #[error("redistricting map: {0}")]
    Map(String),

    #[error("incomplete report set: {0}")]
    Completeness(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("model format: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable category, printed by the CLI before the message.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Argument(_) => "argument",
            Error::Row { .. } | Error::UnknownProvince { .. } | Error::Csv(_) => "data",
            Error::Gap { .. } => "gap",
            Error::Coverage(_) => "coverage",
            Error::Precondition(_) => "precondition",
            Error::Map(_) => "map",
            Error::Completeness(_) => "completeness",
            Error::Divergence { .. } => "divergence",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
