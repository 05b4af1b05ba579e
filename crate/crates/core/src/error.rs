use thiserror::Error;

use crate::spin::Spin;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("inadmissible spin triple ({0}, {1}, {2})")]
    InadmissibleTriple(Spin, Spin, Spin),
    #[error("invalid spin: {0}")]
    InvalidSpin(String),
    #[error("vector norm {0:e} is below the zero-vector threshold")]
    ZeroVector(f64),
    #[error("spin mismatch: expected {expected}, got {found}")]
    SpinMismatch { expected: Spin, found: Spin },
    #[error("channel mismatch: expected {expected}, got {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("fusion block has no diagrams")]
    EmptyDiagramSet,
    #[error("spin schedule has no internal spins")]
    EmptySchedule,
    #[error("invalid fusion diagram: {0}")]
    InvalidDiagram(String),
    #[error("primitive `{0}` is not registered on this tape")]
    UnregisteredPrimitive(String),
    #[error("backward seed must be a real scalar, got shape {0:?}")]
    NonScalarSeed((usize, usize)),
    #[error("position sampling rejected after {0} attempts")]
    RejectionFailure(usize),
    #[error("non-finite loss at epoch {epoch}, sample {sample}: {value}")]
    NonFiniteLoss { epoch: usize, sample: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("json error: {0}")]
    Json(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
