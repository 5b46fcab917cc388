use std::path::PathBuf;

/// Errors produced anywhere in the feature / stitching pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt image: {0}")]
    CorruptImage(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image {width}x{height} is too small (need at least {min} pixels per side)")]
    ImageTooSmall { width: usize, height: usize, min: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("response map has no positive response")]
    EmptyResponse,

    #[error("all gradient magnitudes around ({x}, {y}) are zero")]
    ZeroGradientNeighborhood { x: u32, y: u32 },

    #[error("corner ({x}, {y}) is too close to the image border")]
    TooCloseToBorder { x: u32, y: u32 },

    #[error("descriptor at ({x}, {y}) has no gradient energy")]
    ZeroDescriptor { x: u32, y: u32 },

    #[error("need at least 4 matches, got {0}")]
    InsufficientMatches(usize),

    #[error("no consensus: best inlier set has {best} members (need 4)")]
    NoConsensus { best: usize },

    #[error("degenerate transform: {0}")]
    DegenerateTransform(String),

    #[error("master image too small: {0}")]
    MasterTooSmall(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("pipeline failed at pair {pair}: {source}")]
    PipelineFailure {
        pair: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
