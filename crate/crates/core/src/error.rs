use thiserror::Error;

use crate::cost::LutError;
use crate::tensor::TensorError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {got:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("frame is missing the {0} view")]
    MissingView(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Lut(#[from] LutError),
    #[error(
        "latency budget {budget_ms} ms is infeasible: the cheapest architecture needs {minimal_ms} ms"
    )]
    InfeasibleBudget { budget_ms: f64, minimal_ms: f64 },
    #[error("extrapolation needs {need} frames of history, have {have}")]
    InsufficientHistory { need: usize, have: usize },
    #[error("sequence file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
