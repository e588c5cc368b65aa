use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left:?} vs {right:?} ({context})")]
    ShapeMismatch {
        left: Vec<usize>,
        right: Vec<usize>,
        context: &'static str,
    },

    #[error("invalid tensor: shape {shape:?} needs {expected} values, got {actual}")]
    InvalidTensor {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("invalid layer: {0}")]
    InvalidLayer(String),

    #[error("backward called without a matching forward pass")]
    NoForwardPass,

    #[error("missing parameter tensor `{0}`")]
    MissingParam(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{}: wrong magic number, expected {expected:#010x}, found {found:#010x}", .path.display())]
    WrongMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{}: truncated file ({detail})", .path.display())]
    Truncated { path: PathBuf, detail: String },

    #[error("image/label count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("unknown tokens: {}", .0.join(", "))]
    UnknownTokens(Vec<String>),

    #[error("unknown color `{0}`")]
    UnknownColor(String),

    #[error("audio: {0}")]
    Audio(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged {
        epoch: usize,
        step: usize,
        loss: f64,
    },

    #[error("{0} not found")]
    NotFound(String),

    #[error("{what} not found ({detail}); run {stage} first")]
    MissingArtifact {
        what: &'static str,
        detail: String,
        stage: &'static str,
    },

    #[error("io error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }
}
