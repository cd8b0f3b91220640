use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported or malformed image file: {0}")]
    ImageFormat(String),

    #[error("zero-sized image")]
    EmptyImage,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image dimensions {height}x{width} not divisible by 2^{levels}")]
    IndivisibleDimensions {
        height: usize,
        width: usize,
        levels: usize,
    },

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("zero watermark signal (stego equals host)")]
    ZeroWatermarkSignal,

    #[error("numeric fault: {0}")]
    Numeric(String),

    #[error("degenerate host: extracted vector is zero")]
    DegenerateHost,

    #[error("key material is rank deficient after {0} retries")]
    RankDeficient(usize),

    #[error("input image is not detected at the configured level")]
    NotDetected,

    #[error("gradient unavailable for this detector")]
    GradientUnavailable,

    #[error("sidecar protocol error: {0}")]
    Protocol(String),

    #[error("sidecar deadline of {0:?} exceeded")]
    SidecarTimeout(std::time::Duration),

    #[error("config error: {0}")]
    Config(String),

    #[error("corpus error: {0}")]
    Corpus(String),
}

pub type Result<T> = std::result::Result<T, Error>;
