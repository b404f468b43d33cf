use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed sidecar {path}: {message}")]
    Sidecar { path: PathBuf, message: String },
    #[error("volume data length {actual} does not match dims {dims:?} ({expected} voxels)")]
    LengthMismatch {
        dims: [usize; 3],
        expected: usize,
        actual: usize,
    },
    #[error("checksum mismatch for {path}: sidecar {expected}, data {actual}")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("index {index} out of range for axis of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimsMismatch([usize; 3], [usize; 3]),
    #[error("invalid vessel input: {0}")]
    InvalidVessels(String),
    #[error("graph is not connected")]
    Disconnected,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid phantom spec: {0}")]
    InvalidPhantom(String),
    #[error("point {0:?} lies outside the volume")]
    OutsideVolume([f64; 3]),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
