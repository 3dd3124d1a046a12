use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("image is {height}x{width}, at least 3x3 is required")]
    ImageTooSmall { width: usize, height: usize },

    #[error("frame resolution {got_h}x{got_w} does not match previous frames ({want_h}x{want_w})")]
    ResolutionMismatch {
        want_h: usize,
        want_w: usize,
        got_h: usize,
        got_w: usize,
    },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("malformed data: {0}")]
    Parse(String),

    #[error("{path}: {inner}")]
    File { path: PathBuf, inner: Box<Error> },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Attach the offending file to an error.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            inner: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
