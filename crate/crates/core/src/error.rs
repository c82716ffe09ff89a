use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no valid entries")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("sequence too short: need at least {min} frames, got {got}")]
    TooShort { min: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("negative entry in magnitude spectrum")]
    NegativeInput,
    #[error("{name} = {value} is out of range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("token {token} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("need at least {needed} samples to fit the codebook, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("bad synthesis spec: {0}")]
    BadSpec(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("loss mask selects no positions")]
    EmptyMask,
    #[error("probability rows must sum to 1 (row {row} sums to {sum})")]
    BadProbabilities { row: usize, sum: f64 },
    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Format(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("value for `{0}` is out of range")]
    Range(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("cannot parse `{key}` from `{value}`")]
    Parse { key: String, value: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
}
