use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
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

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("{} pixel(s) not covered by any window, first {:?}", .pixels.len(), .pixels.first())]
    Coverage { pixels: Vec<(usize, usize)> },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("mapping error: {0}")]
    Mapping(String),

    #[error("scene spec error: {0}")]
    Spec(String),

    #[error("missing input: {0}")]
    MissingInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (files, parameters, config)
    /// as opposed to internal failures.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Degenerate(_) | Error::Capacity(_))
    }
}
