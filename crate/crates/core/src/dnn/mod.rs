//! Fully connected classifier trained by mini-batch gradient descent.

mod io;
mod model;
mod train;

use thiserror::Error;

pub use io::{load_model, save_model, ModelParseError, MODEL_HEADER};
pub use model::{
    forward, forward_batch, init_model, label_of, param_count, predict, predict_batch,
    reference_dims, Activation, LayerParams, MlpModel,
};
pub use train::{
    batch_loss, gradients, gradients_with, loss_mse, to_arrays, train, train_on_split, EpochRecord,
    Gradients, LayerGradient, Loss, TrainConfig, TrainReport,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DnnError {
    #[error("bad dimensions: {0}")]
    BadDims(String),
    #[error("width {got} does not match expected {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("bad training configuration: {0}")]
    BadConfig(String),
}
