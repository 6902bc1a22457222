use thiserror::Error;

use crate::autodiff::AdError;
use crate::povm::PovmError;
use crate::predict::PredictError;
use crate::qsim::QsimError;

/// Top-level error for tasks, datasets, selectors and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("guard violation: {0}")]
    Guard(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    Povm(#[from] PovmError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed data: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
