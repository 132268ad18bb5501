use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite feature value{} at row {row}, column {col}", view_suffix(*.view))]
    NonFiniteFeature {
        view: Option<usize>,
        row: usize,
        col: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("eigensolver did not converge: worst residual {residual:.3e} exceeds {tolerance:.3e}")]
    EigenNotConverged { residual: f64, tolerance: f64 },

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}:{line}: expected {expected} columns, found {found}", .file.display())]
    RaggedRow {
        file: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{}:{line}: column {column}: cannot parse {value:?} as a number", .file.display())]
    NonNumeric {
        file: PathBuf,
        line: usize,
        column: usize,
        value: String,
    },

    #[error(
        "row count mismatch: {} has {expected} rows but {} has {found}",
        .reference.display(),
        .file.display()
    )]
    RowCountMismatch {
        reference: PathBuf,
        expected: usize,
        file: PathBuf,
        found: usize,
    },

    #[error("{}: empty matrix", .0.display())]
    EmptyFile(PathBuf),

    #[error("manifest {}: {message}", .path.display())]
    Manifest { path: PathBuf, message: String },

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn view_suffix(view: Option<usize>) -> String {
    match view {
        Some(v) => format!(" in view {v}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// | code | meaning |
    /// |------|---------|
    /// | 3 | invalid configuration |
    /// | 4 | invalid or malformed input data |
    /// | 5 | numerical failure in the solver |
    /// | 6 | file system error |
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 3,
            Error::NonFiniteFeature { .. }
            | Error::Validation(_)
            | Error::Dimension(_)
            | Error::MissingFile(_)
            | Error::RaggedRow { .. }
            | Error::NonNumeric { .. }
            | Error::RowCountMismatch { .. }
            | Error::EmptyFile(_)
            | Error::Manifest { .. } => 4,
            Error::EigenNotConverged { .. } => 5,
            Error::Io { .. } => 6,
        }
    }
}
