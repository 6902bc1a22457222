//! Property regression from measurement records, phase-space tomography and
//! comparison metrics for selection strategies.

mod deepset;
mod imle;
pub mod metrics;

pub use deepset::{
    train_predictor, weighted_sq_error, DeepSetConfig, DeepSetModel, Prediction, PredictorLog, PREDICTOR_FORMAT,
};
pub use imle::{imle_reconstruct, ImleConfig, TomographyResult, P_FLOOR};

use thiserror::Error;

use crate::qsim::QsimError;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Qsim(#[from] QsimError),
}
