use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame {frame}: {message}")]
    Frame { frame: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("box lies entirely outside the raster")]
    OutOfBounds,

    #[error("degenerate histogram: fewer than two occupied bins")]
    DegenerateHistogram,

    #[error("no valid depth inside the box")]
    MissingDepth,

    #[error("template is larger than the search region")]
    TemplateTooLarge,

    #[error("core tracker returned no candidates")]
    EmptyCandidates,

    #[error("non-finite value produced by layer `{layer}`")]
    NonFinite { layer: String },

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("weights file: {0}")]
    Weights(String),

    #[error("config: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short category name used for CLI messages and FFI status mapping.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Frame { .. } => "sequence",
            Error::Io { .. } | Error::Image { .. } => "io",
            Error::InvalidArgument(_) | Error::DimensionMismatch(_) | Error::OutOfBounds => "argument",
            Error::DegenerateHistogram | Error::MissingDepth => "depth",
            Error::TemplateTooLarge | Error::EmptyCandidates => "tracking",
            Error::NonFinite { .. } | Error::Diverged { .. } => "numeric",
            Error::Weights(_) => "weights",
            Error::Config(_) => "config",
            Error::Parse(_) => "parse",
        }
    }
}
