use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: usize, right: usize },

    #[error("field must have zero spatial mean (mean = {mean:e})")]
    NonZeroMean { mean: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("instability at step {step} (t = {time:.4e}): {reason}")]
    Instability { step: usize, time: f64, reason: String },

    #[error("L2 budget violated at step {step}: {before:e} -> {after:e}")]
    L2Budget { step: usize, before: f64, after: f64 },

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("experiment failed: {0}")]
    ExperimentFailed(String),

    #[error("output directory {} exists and is not empty (use --force to overwrite)", .0.display())]
    OutputExists(std::path::PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
