use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("missing target column `{0}`")]
    MissingColumn(String),

    #[error("target column `{0}` has fewer than two classes after parsing")]
    SingleClass(String),

    #[error("no usable rows in {0}")]
    EmptyData(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("network failure: {0}")]
    Network(String),

    #[error("unknown OpenML dataset id {0}")]
    UnknownDataset(u64),

    #[error("malformed payload: {0}")]
    MalformedPayload(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Core(#[from] divbo_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            HarnessError::MissingFile(_) => "missing_file",
            HarnessError::MissingColumn(_) => "missing_target_column",
            HarnessError::SingleClass(_) => "single_class",
            HarnessError::EmptyData(_) => "empty_data",
            HarnessError::Csv(_) => "csv",
            HarnessError::Network(_) => "network",
            HarnessError::UnknownDataset(_) => "unknown_dataset",
            HarnessError::MalformedPayload(_) => "malformed_payload",
            HarnessError::InvalidArgument(_) => "invalid_argument",
            HarnessError::Core(_) => "core",
            HarnessError::Io(_) => "io",
            HarnessError::Json(_) => "json",
        }
    }

    /// Process exit status used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::MissingFile(_) => 10,
            HarnessError::MissingColumn(_) => 11,
            HarnessError::SingleClass(_) => 12,
            HarnessError::EmptyData(_) => 13,
            HarnessError::Csv(_) => 14,
            HarnessError::Network(_) => 20,
            HarnessError::UnknownDataset(_) => 21,
            HarnessError::MalformedPayload(_) => 22,
            HarnessError::InvalidArgument(_) => 2,
            HarnessError::Core(_) => 30,
            HarnessError::Io(_) => 40,
            HarnessError::Json(_) => 41,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
