use thiserror::Error;

/// Errors produced by the regime clustering pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("price at index {index} is not strictly positive ({value})")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("price stream needs at least 2 prices, got {0}")]
    TooShort(usize),
    #[error("timestamps must be strictly increasing (index {0})")]
    UnorderedTimestamps(usize),
    #[error("stream of length {len} is shorter than the window length {h1}")]
    StreamTooShort { len: usize, h1: usize },
    #[error("invalid window configuration: {0}")]
    InvalidWindow(String),
    #[error("window {start}..{end} is out of bounds for a stream of length {len}")]
    WindowOutOfBounds { start: usize, end: usize, len: usize },
    #[error("empirical measure has no atoms")]
    EmptyMeasure,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("measures have unequal atom counts ({0} vs {1})")]
    UnequalAtomCounts(usize, usize),
    #[error("unsupported Wasserstein order {0} for this operation")]
    UnsupportedOrder(f64),
    #[error("instance too large for the exact transport oracle ({0} atoms, cap {1})")]
    InstanceTooLarge(usize, usize),
    #[error("k = {k} exceeds the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("sample is empty")]
    EmptySample,
    #[error("vector lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cluster has {0} members, at least {1} required")]
    ClusterTooSmall(usize, usize),
    #[error("centroids {0} and {1} coincide")]
    DegenerateCentroids(usize, usize),
    #[error("every cluster has zero diameter")]
    ZeroDiameter,
    #[error("regime schedule is infeasible: {0}")]
    Infeasible(String),
    #[error("regime schedule violates its invariants: {0}")]
    InvalidSchedule(String),
    #[error("no return is covered by any window")]
    NoCoveredReturns,
    #[error("hidden state {0} lost all responsibility mass")]
    DegenerateEmission(usize),
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for errors caused by bad input or configuration, as opposed to
    /// numerical failures during a computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::NonPositivePrice { .. }
                | Error::TooShort(_)
                | Error::UnorderedTimestamps(_)
                | Error::StreamTooShort { .. }
                | Error::InvalidWindow(_)
                | Error::KTooLarge { .. }
                | Error::InvalidConfig(_)
                | Error::Infeasible(_)
                | Error::InvalidSchedule(_)
                | Error::UnsupportedOrder(_)
                | Error::Io(_)
                | Error::Parse(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
            _ => Error::Parse(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.to_string())
        } else {
            Error::Parse(e.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
