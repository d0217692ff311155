use thiserror::Error;

use crate::grid::Point;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] stcnn_tensor::TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trajectory {id:?}: point {index} at ({}, {}) lies outside the {height}x{width} grid", point.row, point.col)]
    OutOfGrid {
        id: String,
        index: usize,
        point: Point,
        height: usize,
        width: usize,
    },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("decoder geometry: {0}")]
    Geometry(String),
    #[error("{what}: need at least {need} points, got {got}")]
    TooShort {
        what: &'static str,
        need: usize,
        got: usize,
    },
    #[error("reference image: {0}")]
    Reference(String),
    #[error("distribution mass sums to {sum} (tolerance 1e-6)")]
    Unnormalized { sum: f64 },
    #[error("invalid logits: {0}")]
    InvalidLogits(String),
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: u64, loss: f64 },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("metrics: {0}")]
    Metrics(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
