use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum IdcError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vector has zero L2 norm")]
    ZeroNormVector,

    #[error("memory key has zero L2 norm")]
    ZeroNormKey,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input")]
    EmptyInput,

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: i64, num_classes: usize },

    #[error("stale forward cache: {0}")]
    StaleCache(String),

    #[error("optimizer shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("memory bank {0} is empty")]
    EmptyBank(usize),

    #[error("slot index {index} out of range for bank of {len} slots")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("at least two classes are required")]
    SingleClass,

    #[error("empty target set")]
    EmptyTargetSet,

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("invalid synthetic data spec: {0}")]
    InvalidSpec(String),

    #[error("format error at line {line}: {message}")]
    FormatError { line: u64, message: String },

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("unknown sample id {0:?}")]
    UnknownId(String),

    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    CorruptFile(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = IdcError> = std::result::Result<T, E>;

impl IdcError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IdcError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            IdcError::DimensionMismatch { .. } => "DimensionMismatch",
            IdcError::ZeroNormVector => "ZeroNormVector",
            IdcError::ZeroNormKey => "ZeroNormKey",
            IdcError::NonFinite(_) => "NonFinite",
            IdcError::EmptyInput => "EmptyInput",
            IdcError::LabelOutOfRange { .. } => "LabelOutOfRange",
            IdcError::StaleCache(_) => "StaleCache",
            IdcError::ShapeMismatch(_) => "ShapeMismatch",
            IdcError::EmptyBank(_) => "EmptyBank",
            IdcError::IndexOutOfRange { .. } => "IndexOutOfRange",
            IdcError::SingleClass => "SingleClass",
            IdcError::EmptyTargetSet => "EmptyTargetSet",
            IdcError::ConfigInvalid(_) => "ConfigInvalid",
            IdcError::InvalidSpec(_) => "InvalidSpec",
            IdcError::FormatError { .. } => "FormatError",
            IdcError::DuplicateId(_) => "DuplicateId",
            IdcError::UnknownId(_) => "UnknownId",
            IdcError::VersionMismatch { .. } => "VersionMismatch",
            IdcError::CorruptFile(_) => "CorruptFile",
            IdcError::Io { .. } => "Io",
        }
    }
}
