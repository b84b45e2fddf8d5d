use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("degenerate batch: batch norm needs at least 2 samples per channel, got {0}")]
    DegenerateBatch(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unknown pattern `{0}` (expected bayer, diagonal_stripe, cygm, hirakawa or svec)")]
    UnknownPattern(String),

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("plane {plane} has no samples in a {height}x{width} image")]
    EmptyPlane {
        plane: usize,
        height: usize,
        width: usize,
    },

    #[error("pattern `{0}` is degenerate: filter matrix has rank < 3")]
    DegeneratePattern(String),

    #[error("degenerate radiance range: max == min == {0}")]
    DegenerateRange(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("unsupported bit depth: {0}")]
    UnsupportedDepth(String),

    #[error("layer {layer}: expected {expected}, found {found}")]
    LayerMismatch {
        layer: usize,
        expected: String,
        found: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::Shape {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
