use thiserror::Error;

/// Errors raised by the estimation, simulation and ingestion layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value {value} in {context}")]
    NonFinite { value: f64, context: String },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("no event on trajectory")]
    NoEvent,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("no event-bearing trajectories")]
    NoEventBearing,

    #[error("time index {t} outside 1..={horizon}")]
    TimeOutOfRange { t: usize, horizon: usize },

    #[error("conditional sample empty: no trajectory has its first event at t = {t}")]
    ConditionalSampleEmpty { t: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing bin {bin} ({start}) on {date}")]
    MissingBin {
        date: String,
        bin: usize,
        start: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn param(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
