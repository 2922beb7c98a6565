use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate warp: homography is singular")]
    DegenerateWarp,

    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),

    #[error("variance cost is undefined without valid samples")]
    UndefinedCost,

    #[error("no valid ground-truth pixels to supervise the loss")]
    EmptySupervision,

    #[error("probabilities sum to {0}, expected 1")]
    InvalidDistribution(f64),

    #[error("optimization diverged at step {0}")]
    Divergence(usize),

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("unsupported endianness: big-endian PFM files are not supported")]
    UnsupportedEndianness,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}
