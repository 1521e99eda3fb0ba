use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("numerical failure: {0}")]
    NonFinite(String),

    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: non-triangular face at line {line}")]
    NonTriangularFace { path: PathBuf, line: usize },

    #[error("{path}: vertex index {index} out of range at line {line}")]
    IndexOutOfRange {
        path: PathBuf,
        line: usize,
        index: i64,
    },

    #[error("{path}: parse error at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("degenerate face {face} (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },

    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("bad magic header (not a checkpoint)")]
    BadMagic,

    #[error("unsupported checkpoint format version {found} (this build reads {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("checksum mismatch")]
    ChecksumMismatch,

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    /// Stable machine-readable code for each failure class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InvalidState(_) => "invalid-state",
            Error::NonFinite(_) => "non-finite",
            Error::Unreadable { .. } => "unreadable",
            Error::Unwritable { .. } => "unwritable",
            Error::NonTriangularFace { .. } => "non-triangular-face",
            Error::IndexOutOfRange { .. } => "index-out-of-range",
            Error::Parse { .. } => "parse",
            Error::DegenerateFace { .. } => "degenerate-face",
            Error::Manifest { .. } => "manifest",
            Error::BadMagic => "bad-magic",
            Error::VersionMismatch { .. } => "version-mismatch",
            Error::Truncated(_) => "truncated",
            Error::ChecksumMismatch => "checksum",
            Error::Image { .. } => "image",
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
