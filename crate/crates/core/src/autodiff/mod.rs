//! Reverse-mode differentiation over dense `f64` matrices and the layers the
//! selector and predictor are built from.

mod graph;
mod layers;
mod params;
mod tensor;

pub use graph::{softmax_masked, Graph, Var};
pub use layers::{skip_add, BatchNorm, EncoderBlock, FeedForward, Linear, Mlp, MultiHeadAttention, BN_EPS};
pub use params::{Adam, AdamConfig, Grads, Init, Param, ParamId, ParamStore, CHECKPOINT_FORMAT};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("every entry is masked")]
    AllMasked,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
