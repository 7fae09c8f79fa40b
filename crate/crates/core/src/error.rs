use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("non-finite coordinate at point {index}")]
    NonFiniteInput { index: usize },
    #[error("cannot select {requested} points from a cloud of {available}")]
    BadCount { requested: usize, available: usize },
    #[error("neighbor count must be at least 1 (got {0})")]
    BadK(usize),
    #[error("coarse point set is empty")]
    EmptyCoarse,
    #[error("requested {requested} encoding channels but the anchor grid provides {capacity}")]
    DimOverflow { requested: usize, capacity: usize },
    #[error("hybrid split mismatch: {fourier} Fourier + {adaptive} adaptive != {dim}")]
    SplitMismatch {
        fourier: usize,
        adaptive: usize,
        dim: usize,
    },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least {required} points, found {available}")]
    TooFewPoints { required: usize, available: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("class id {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("descriptor dimension {found} does not match bank dimension {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("unknown category {0}")]
    UnknownCategory(u16),
    #[error("pool cannot supply {ways}-way {shots}-shot episodes with {queries} queries per class")]
    InsufficientPool {
        ways: usize,
        shots: usize,
        queries: usize,
    },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("bank was built with encoder config {found}, expected {expected}")]
    ConfigHashMismatch { expected: String, found: String },
    #[error("corrupt bank file: {0}")]
    CorruptBank(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse_line(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: format!("line {line}"),
            message: message.into(),
        }
    }

    pub(crate) fn parse_offset(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            location: format!("byte offset {offset}"),
            message: message.into(),
        }
    }

    /// True for errors caused by the data handed in (files, labels, banks)
    /// rather than by the caller's configuration or a bug.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::EmptyCloud
                | Error::NonFiniteInput { .. }
                | Error::TooFewPoints { .. }
                | Error::EmptyTrainingSet
                | Error::ClassOutOfRange { .. }
                | Error::UnknownCategory(_)
                | Error::InsufficientPool { .. }
                | Error::Parse { .. }
                | Error::ConfigHashMismatch { .. }
                | Error::CorruptBank(_)
                | Error::Manifest(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::DimMismatch { .. }
        )
    }
}
