use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("invalid audio: {0}")]
    InvalidAudio(String),
    #[error("expected {expected} Hz input, got {found} Hz")]
    WrongSampleRate { expected: u32, found: u32 },
    #[error("invalid band count {n_mels} (at most {max} for this FFT size)")]
    InvalidBandCount { n_mels: usize, max: usize },
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate clip id {0}")]
    DuplicateClipId(String),
    #[error("line {line}: expected {expected} tag columns, found {found}")]
    BadTagArity { line: usize, expected: usize, found: usize },
    #[error("{0} out of range")]
    OutOfRange(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("split {0} is empty")]
    EmptySplit(String),
    #[error("training mode mismatch: {0}")]
    ModeMismatch(String),
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("unknown deformation spec {0:?}")]
    UnknownDeformation(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Autodiff(#[from] tagbench_autodiff::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
