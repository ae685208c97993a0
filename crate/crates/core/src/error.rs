use std::io;

use thiserror::Error;

/// Errors raised across the simulator, model, training and evaluation code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("ambiguous centerline projection at stations {0:.1} m and {1:.1} m")]
    AmbiguousStation(f64, f64),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("skilled driver crashed on terrain seed {seed} at tick {tick}")]
    SkilledCrash { seed: u64, tick: u64 },

    #[error("run did not finish within {ticks} ticks")]
    DidNotFinish { ticks: u64 },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("protocol: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(expected: impl ToString, actual: impl ToString) -> Error {
    Error::Shape {
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
