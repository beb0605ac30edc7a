use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("channel mismatch in {op}: expected {expected}, got {actual}")]
    ChannelMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("unsupported kernel size {kh}x{kw}")]
    UnsupportedKernel { kh: usize, kw: usize },
    #[error("{op} needs even spatial dims, got {h}x{w}")]
    OddSpatial { op: &'static str, h: usize, w: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("variable does not belong to this tape")]
    NotOnTape,
    #[error("tape is frozen; no further ops can be recorded")]
    TapeFrozen,
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("parameter {0} has no gradient")]
    MissingGrad(usize),
    #[error("bce target must be binary (0 or 1), found {0}")]
    TargetNotBinary(f64),
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
