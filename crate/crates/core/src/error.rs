use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient input: {0}")]
    InsufficientInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("unsupported sample rate {0} Hz (expected {1} Hz)")]
    UnsupportedSampleRate(u32, u32),

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("over-determined constraint: {0}")]
    OverDetermined(String),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("trace parse error at line {line}: {message}")]
    TraceParse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
