use thiserror::Error;

/// Errors produced by the algebra, path and solver layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("alphabet size mismatch: {left} vs {right}")]
    AlphabetMismatch { left: usize, right: usize },

    #[error("truncation level mismatch: {left} vs {right}")]
    LevelMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("letter {letter} outside alphabet 1..={dim}")]
    InvalidLetter { letter: usize, dim: usize },

    #[error("word of length {len} exceeds truncation level {level}")]
    WordTooLong { len: usize, level: usize },

    #[error("grading precondition violated: {0}")]
    Grading(String),

    #[error("not a truncated character (worst violation {violation:e})")]
    NotCharacter { violation: f64 },

    #[error("times are not strictly increasing at index {index}")]
    NonIncreasingTimes { index: usize },

    #[error("time {time} outside [{start}, {end}]")]
    TimeOutOfRange { time: f64, start: f64, end: f64 },

    #[error("invalid time interval: s = {s} > t = {t}")]
    ReversedInterval { s: f64, t: f64 },

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("insufficient derivative order: need {needed}, declared {declared}")]
    InsufficientOrder { needed: usize, declared: usize },

    #[error("empty partition")]
    EmptyPartition,

    #[error("non-finite state in cell {cell} ([{start}, {end}])")]
    BlowUp { cell: usize, start: f64, end: f64 },

    #[error("particle {index}: {source}")]
    Particle { index: usize, source: Box<Error> },

    #[error("Cholesky factorization failed: {0}")]
    Cholesky(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot parse {what}: {message}")]
    Parse { what: String, message: String },
}

impl Error {
    /// True for failures of the numerics (blow-up, factorization) rather
    /// than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::BlowUp { .. } | Error::Cholesky(_) => true,
            Error::Particle { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
