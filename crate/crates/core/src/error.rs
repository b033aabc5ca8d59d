use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("non-finite intermediate value after layer {layer}")]
    NonFiniteLayer { layer: usize },

    #[error("tape is stale: recorded for {recorded}, queried against {current}")]
    StaleTape { recorded: String, current: String },

    #[error("output selector {selector} out of range for output of size {size}")]
    SelectorOutOfRange { selector: usize, size: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point is not on the manifold (distance {distance:e})")]
    OffManifold { distance: f64 },

    #[error("chart undefined at {0}")]
    ChartUndefined(String),

    #[error("step norm {norm} exceeds half the reach ({limit})")]
    StepTooLarge { norm: f64, limit: f64 },

    #[error("points are {distance} apart, not within reach {reach}")]
    OutsideReach { distance: f64, reach: f64 },

    #[error("slerp undefined: latents are antiparallel (angle {angle})")]
    SlerpDegenerate { angle: f64 },

    #[error("gradient evaluation failed at path step {step}: {source}")]
    PathStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("held-out accuracy {accuracy:.4} below floor {floor:.4} (final loss {loss:.6})")]
    AccuracyFloorUnmet { accuracy: f64, floor: f64, loss: f64 },

    #[error("held-out reconstruction MSE {mse:e} above ceiling {ceiling:e}")]
    MseCeilingUnmet { mse: f64, ceiling: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint truncated while reading tensor {tensor}")]
    Truncated { tensor: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
