use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("stale forward cache: {0}")]
    StaleCache(&'static str),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: cannot decode image: {msg}", path.display())]
    Image { path: PathBuf, msg: String },

    #[error("{}: row {row}: {msg}", path.display())]
    Manifest { path: PathBuf, row: usize, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes {found:?}, not a checkpoint or unsupported version")]
    Magic { found: [u8; 4] },
    #[error("unsupported version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("file truncated while reading {0}")]
    Truncated(String),
    #[error("malformed config: {0}")]
    Config(String),
    #[error("tensor {name}: stored dims {stored:?} but model expects {expected:?}")]
    Dimension {
        name: String,
        stored: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("unknown tensor {0}")]
    UnknownTensor(String),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("checkpoint was saved with a different model config")]
    ConfigMismatch,
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
