use std::path::PathBuf;

use thiserror::Error;

use crate::prototype::Method;

/// Coarse classification of failures, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or a contract violation by the caller.
    Usage,
    /// Filesystem or on-disk format problem.
    Format,
    /// Data that cannot be processed numerically.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic at offset 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {found} at offset 8 (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error(
        "truncated payload: {what} at offset {offset} needs {needed} bytes, {available} available"
    )]
    TruncatedPayload {
        what: String,
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("{extra} unexpected trailing bytes after offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },

    #[error("dimension mismatch ({context}): expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in record {record}, component {component}")]
    NonFinite { record: usize, component: usize },

    #[error("record {record} has label {label} but only {n_classes} classes are declared")]
    LabelOutOfRange {
        record: usize,
        label: u32,
        n_classes: usize,
    },

    #[error("duplicate record index {0}")]
    DuplicateIndex(u64),

    #[error("corrupt file at offset {offset}: {message}")]
    Corrupt { offset: usize, message: String },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("record {record} is the zero vector and cannot be unit-normalized")]
    ZeroVector { record: u64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("budget of {k} prototypes exceeds class size {class_size}")]
    BudgetExceedsClass { k: usize, class_size: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("class {class_id}: {source}")]
    ClassFit {
        class_id: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("prototype set is empty")]
    EmptyPrototypeSet,

    #[error("k = {k} is out of range 1..={available}")]
    KOutOfRange { k: usize, available: usize },

    #[error("class {0} has already been seen")]
    ClassAlreadySeen(u32),

    #[error("class {0} was declared with an empty batch")]
    EmptyBatch(u32),

    #[error("no test records belong to the seen classes")]
    NoEligibleRecords,

    #[error("test label {0} is not among the trained classes")]
    UnseenLabel(u32),

    #[error("method {0} produces no exemplar prototypes")]
    UnsupportedMethod(Method),

    #[error("prototype fingerprint mismatch: {0}")]
    FingerprintMismatch(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. }
            | Error::BadMagic { .. }
            | Error::VersionMismatch { .. }
            | Error::TruncatedPayload { .. }
            | Error::TrailingBytes { .. }
            | Error::LabelOutOfRange { .. }
            | Error::DuplicateIndex(_)
            | Error::Corrupt { .. }
            | Error::Manifest(_)
            | Error::Json(_)
            | Error::Csv { .. } => ErrorKind::Format,
            Error::DimensionMismatch { .. } | Error::FingerprintMismatch(_) => ErrorKind::Format,
            Error::NonFinite { .. } | Error::ZeroVector { .. } => ErrorKind::Numeric,
            Error::ClassFit { source, .. } => source.kind(),
            _ => ErrorKind::Usage,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
