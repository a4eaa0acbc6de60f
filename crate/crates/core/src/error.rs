use std::path::PathBuf;

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

    /// Malformed input file; `location` is a human-readable row/column hint.
    #[error("{path}: {location}: {message}")]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("{path}: row-count mismatch: sidecar declares {declared} rows, data holds {found}")]
    RowCountMismatch {
        path: PathBuf,
        declared: usize,
        found: usize,
    },

    #[error("missing label for image id {0:?}")]
    MissingLabel(String),

    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),

    #[error("class {class:?} has {count} member(s), need at least 2")]
    SmallClass { class: String, count: usize },

    #[error("constant representation: every pairwise distance is zero")]
    ConstantRepresentation,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("site {site:?}, block {block:?}: zero response variance")]
    ZeroVariance { site: String, block: String },

    #[error("site {site:?}, block {block:?}: no blank presentations")]
    MissingBlank { site: String, block: String },

    #[error("site {site:?} has no response to image {image:?}")]
    MissingCoverage { site: String, image: String },

    #[error("duplicate record {0}")]
    DuplicateKey(String),

    /// Arguments or data that violate a documented precondition.
    #[error("{0}")]
    Invalid(String),

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        path: impl Into<PathBuf>,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }

    /// True when the error stems from user-supplied input rather than a
    /// failure inside the numerical pipeline.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Eigen(_))
    }
}
