use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("input too short: {len} samples, need at least {needed}")]
    InputTooShort { len: usize, needed: usize },
    #[error("window length must be at least 1")]
    EmptyWindow,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("probability {0} outside [0, 1)")]
    BadProbability(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing modality: {0}")]
    Modality(String),
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),
    #[error("cannot resample video from {from} fps down to {to} fps")]
    DownsampleUnsupported { from: f64, to: f64 },
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("unsupported wav file {path}: {reason}")]
    UnsupportedWav { path: PathBuf, reason: String },
    #[error("bad video file {path}: {reason}")]
    BadVideoFile { path: PathBuf, reason: String },
    #[error("bad mask file {path}: {reason}")]
    BadMaskFile { path: PathBuf, reason: String },
    #[error("bad checkpoint {path}: {reason}")]
    BadCheckpoint { path: PathBuf, reason: String },
    #[error("bad manifest {path}: {reason}")]
    BadManifest { path: PathBuf, reason: String },
    #[error("{rate} rate undefined: reference mask has no {class} cells")]
    UndefinedRate { rate: &'static str, class: u8 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
