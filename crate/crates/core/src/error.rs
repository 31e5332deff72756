use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarError {
    #[error("missing input {}", .0.display())]
    MissingPath(PathBuf),

    #[error("unexpected entry {}", .0.display())]
    UnexpectedPath(PathBuf),

    #[error("{}: row {row}: {message}", path.display())]
    MalformedRow {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{}: line {line}: {message}", path.display())]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("window length {window} exceeds recording length {frames}")]
    WindowTooLong { window: usize, frames: usize },

    #[error("DFT image needs an even window length, got {0}")]
    OddWindow(usize),

    #[error("nothing to evaluate")]
    EmptyEvaluation,

    #[error("subject {0} has no recordings")]
    EmptySubject(u32),

    #[error("{0}")]
    Model(String),

    #[error(transparent)]
    Nn(#[from] attnhar_nn::NnError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png: {0}")]
    Png(#[from] png::EncodingError),
}

pub type Result<T, E = HarError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarError {
    let path = path.into();
    move |source| HarError::Io { path, source }
}
