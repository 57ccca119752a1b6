use thiserror::Error;

pub type Result<T> = std::result::Result<T, SvmError>;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid label {value:?} on line {line} (expected -1, 0 or +1)")]
    InvalidLabel { line: usize, value: String },

    #[error("empty input: no samples found")]
    EmptyFile,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value encountered at iteration {iter}")]
    NonFinite { iter: usize },

    #[error("LP instance has {vars} variables, above the oracle size guard of {guard}")]
    OracleSizeGuard { vars: usize, guard: usize },

    #[error("simplex solver failure: {0}")]
    Simplex(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("criterion undefined: {0}")]
    Undefined(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl SvmError {
    /// Whether the error stems from the input data rather than the solver.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            SvmError::Io(_)
                | SvmError::Parse { .. }
                | SvmError::InvalidLabel { .. }
                | SvmError::EmptyFile
                | SvmError::Dimension(_)
                | SvmError::Partition(_)
                | SvmError::Csv(_)
                | SvmError::Json(_)
                | SvmError::OracleSizeGuard { .. }
                | SvmError::Undefined(_)
        )
    }
}
