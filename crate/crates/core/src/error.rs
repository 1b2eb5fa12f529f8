use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("incompatible refinement factor {factor} for axis of length {len}")]
    IncompatibleRefinement { factor: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("covariance not SPD (jitter up to {max_jitter:e} failed)")]
    NotSpd { max_jitter: f64 },

    #[error("singular system (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("map is not monotone: coordinate {coordinate} has derivative {derivative:e} at sample {sample}")]
    NotMonotone {
        coordinate: usize,
        sample: usize,
        derivative: f64,
    },

    #[error("optimizer failed: {reason} (objective trace: {trace:?})")]
    Optimizer { reason: String, trace: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("zero variance series")]
    ZeroVariance,

    #[error("infinite PSNR (images are identical)")]
    InfinitePsnr,

    #[error("empty sample set")]
    Empty,

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap with the name of the pipeline stage that failed.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
