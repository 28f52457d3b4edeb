use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate embedding: zero norm")]
    DegenerateEmbedding,

    #[error("embedding contains a non-finite value at component {0}")]
    NonFinite(usize),

    #[error("embedding must have at least one component")]
    EmptyEmbedding,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("query set needs at least one negative query")]
    EmptyNegatives,

    #[error("surprise undefined on empty set")]
    EmptySampleSet,

    #[error("γ undefined on a sample set with {0} entries (need at least 2)")]
    GammaUndefined(usize),

    #[error("nothing to trim: {len} entries within capacity {capacity}")]
    NothingToTrim { len: usize, capacity: usize },

    #[error("frame index {found} is not greater than previous index {previous}")]
    OutOfOrder { previous: u64, found: u64 },

    #[error("frame {frame_index}: {source}")]
    AtFrame {
        frame_index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("murk level {0} outside [0, 1)")]
    MurkLevel(f64),

    #[error("enhancer failed on frame {frame_index}: {reason}")]
    Enhancer { frame_index: u64, reason: String },

    #[error("unknown frame index {0}")]
    UnknownFrame(u64),

    #[error("need at least 2 evaluators, got {0}")]
    TooFewEvaluators(usize),

    #[error("{path}: byte offset {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: line {line}: {message}")]
    Sidecar {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("infeasible synthetic spec: {0}")]
    Synth(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_frame(self, frame_index: u64) -> Self {
        match self {
            e @ Error::AtFrame { .. } => e,
            e => Error::AtFrame {
                frame_index,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed inputs or configuration rather
    /// than by something going wrong during a run.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::MurkLevel(_)
            | Error::Format { .. }
            | Error::Sidecar { .. }
            | Error::Synth(_)
            | Error::Io { .. } => true,
            Error::AtFrame { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}
