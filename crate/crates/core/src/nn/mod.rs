//! A small deterministic CPU neural-network engine in `f64`: convolution,
//! ReLU, pooling, masked losses, Adam and an early-stopping training loop.
//!
//! Only the fixed architectures used by the autoencoder and the per-meal heads
//! are supported; there is no general autodiff graph.

mod adam;
pub mod conv;
mod layers;
mod loss;
pub mod store;
mod tensor;
mod train;

use thiserror::Error;

pub use adam::Adam;
pub use conv::{conv2d_backward, conv2d_forward, ConvGeometry, ConvGrads};
pub use layers::{Conv2d, ForwardCache, Layer, LayerSpec, Sequential};
pub use loss::{masked_cross_entropy, masked_mse, LossGrad};
pub use tensor::Tensor4;
pub use train::{run_training, EarlyStopRule, EpochRecord, Objective, TrainingOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: i64, classes: usize },
    #[error("validation loss diverged at epoch {epoch}: {loss}")]
    DivergenceDetected { epoch: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("weight container: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}
