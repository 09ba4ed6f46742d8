use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt model payload: {0}")]
    CorruptPayload(String),

    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    #[error("enumeration of {configurations} configurations exceeds the limit of {limit}")]
    SizeGuard { configurations: u128, limit: u128 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("undefined posterior: {0}")]
    UndefinedPosterior(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error class: 2 for data problems, 3 for numeric ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericDegeneracy(_) | Error::UndefinedPosterior(_) => 3,
            Error::InvalidConfig(_) => 1,
            _ => 2,
        }
    }
}
