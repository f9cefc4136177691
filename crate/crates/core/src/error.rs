use std::path::PathBuf;

use crate::signals::Channel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("session is missing channel {0}")]
    MissingChannel(Channel),
    #[error("corrupt sample in {channel} at index {index}")]
    CorruptSample { channel: Channel, index: usize },
    #[error("{channel} sampled at {found} Hz, device contract is {expected} Hz")]
    RateMismatch { channel: Channel, expected: f64, found: f64 },
    #[error("signal has no samples")]
    EmptySignal,
    #[error("invalid clip bounds: lower {lo}% must be below upper {hi}%")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("invalid window spec: {0}")]
    InvalidSpec(String),

    #[error("value {value} at index {index} is outside [0, 1]")]
    DomainError { index: usize, value: f64 },
    #[error("window of length {0} is too short to encode (need at least 2)")]
    TooShort(usize),

    #[error("dataset is empty")]
    EmptyDataset,
    #[error("manifest references missing image for stem {stem}, channel {channel}")]
    ManifestInconsistent { stem: String, channel: Channel },

    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("expected 7 channel images, got {0}")]
    ChannelCountError(usize),
    #[error("cannot fit {k} components from {samples} samples of dimension {features}")]
    RankError { k: usize, samples: usize, features: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimError { expected: usize, found: usize },
    #[error("no embedding for stem {stem}, channel {channel}")]
    MissingEmbedding { stem: String, channel: Channel },

    #[error("non-finite value in {0}")]
    NumericError(&'static str),
    #[error("split {0} is empty")]
    EmptySplit(String),

    #[error("confusion matrix is empty")]
    EmptyEval,
    #[error("paired t-test needs at least 2 pairs of equal length (got {a} and {b})")]
    InsufficientPairs { a: usize, b: usize },

    #[error("state schedule leaves [{from}, {to}) s uncovered")]
    ScheduleGap { from: f64, to: f64 },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }
}
