use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("degenerate vector at row {row}: norm {norm:e} is not above eps")]
    DegenerateVector { row: usize, norm: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("invalid state: {0}")]
    State(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Load {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("need at least 3 speakers for leave-one-speaker-out, found {0}")]
    InsufficientSpeakers(usize),

    #[error("unknown prompt: {0:?}")]
    UnknownPrompt(String),

    #[error("infeasible alignment: {frames} frames cannot emit a target needing {required}")]
    InfeasibleAlignment { frames: usize, required: usize },

    #[error("word error rate is undefined for an empty reference")]
    UndefinedWer,

    #[error("batch of {0} is too small for batch statistics")]
    BatchTooSmall(usize),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
