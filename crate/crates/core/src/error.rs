use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("model runtime failure: {0}")]
    ModelRuntime(String),

    #[error("model produced invalid output: {0}")]
    ModelOutput(String),

    #[error("storage failure: {0}")]
    Storage(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("illegal state transition: {0}")]
    State(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("malformed package: {0}")]
    PackageFormat(String),

    #[error("schema violation at {pointer}: {message}")]
    Schema { pointer: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Stable machine-readable code, echoed by the HTTP API and the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "DimensionError",
            Error::Parameter(_) => "ParameterError",
            Error::InvalidData(_) => "InvalidDataError",
            Error::Unsupported(_) => "UnsupportedError",
            Error::ModelRuntime(_) => "ModelRuntimeError",
            Error::ModelOutput(_) => "ModelOutputError",
            Error::Storage(_) => "StorageError",
            Error::NotFound(_) => "NotFoundError",
            Error::State(_) => "StateError",
            Error::Integrity(_) => "IntegrityError",
            Error::PackageFormat(_) => "PackageFormatError",
            Error::Schema { .. } => "SchemaError",
            Error::Io(_) => "StorageError",
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

impl From<rusqlite::Error> for Error {
    fn from(e: rusqlite::Error) -> Self {
        Error::Storage(e.to_string())
    }
}

impl From<zip::result::ZipError> for Error {
    fn from(e: zip::result::ZipError) -> Self {
        Error::PackageFormat(e.to_string())
    }
}
