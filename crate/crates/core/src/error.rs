use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// Rows/columns of two inputs disagree, or a header is wrong.
    #[error("shape mismatch in {file}: {detail}")]
    Shape { file: String, detail: String },

    #[error("row {row}, column `{column}`: cannot parse `{value}` as an integer")]
    ParseNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: value `{value}` is not a leaf of the attribute hierarchy")]
    UnknownCategory {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },

    #[error("attribute `{attribute}` is declared {declared} but {observed}")]
    RoleContradiction {
        attribute: String,
        declared: String,
        observed: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("hierarchy error ({source_name}): {detail}")]
    Hierarchy { source_name: String, detail: String },

    #[error(
        "attribute `{attribute}` cannot be made {l}-diverse: value `{value}` occurs {frequency} times among {size} sensitive cells"
    )]
    InfeasibleBuckets {
        attribute: String,
        value: String,
        frequency: usize,
        size: usize,
        l: usize,
    },

    #[error("QI-signature subset {{{}}} has {size} tuples, fewer than k = {k}", signature.join(", "))]
    InfeasibleGroup {
        signature: Vec<String>,
        size: usize,
        k: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown tuple id {0}")]
    UnknownTuple(u64),

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("kind mismatch: {0}")]
    KindMismatch(String),

    #[error("malformed published table {path}: {detail}")]
    Malformed { path: PathBuf, detail: String },
}

impl Error {
    /// True for errors that mean the requested (k, l) cannot be met on the data.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleBuckets { .. } | Error::InfeasibleGroup { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Malformed {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
