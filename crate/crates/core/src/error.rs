use thiserror::Error;

/// Errors produced by the harmonization core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch on {axis}: expected {expected}, got {actual}")]
    Dimension {
        axis: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("value out of range: {0}")]
    Value(String),

    #[error("height and width must be divisible by the patch size {patch} (got {height}x{width})")]
    PatchDivisibility {
        patch: usize,
        height: usize,
        width: usize,
    },

    #[error("timestep {t} outside 1..={steps}")]
    Timestep { t: usize, steps: usize },

    #[error("conditioning layout mismatch: {0}")]
    Layout(String),

    #[error("non-finite loss for batch sample {index} at timestep {t}")]
    NonFiniteLoss { index: usize, t: usize },

    #[error("mask policy violation: {0}")]
    MaskPolicy(String),

    #[error("dataset has no {0} samples")]
    MissingPath(&'static str),

    #[error("window plan: {0}")]
    Window(String),

    #[error("metric: {0}")]
    Metric(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(axis: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            axis,
            expected,
            actual,
        })
    }
}
