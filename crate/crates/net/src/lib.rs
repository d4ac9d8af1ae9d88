//! Count-regression network and training loop.
//!
//! Three convolutional stages (32 feature maps, 3x3 kernels, ReLU, 2x2 max
//! pooling each), followed by two parallel heads on the flattened features:
//! a scalar regression head (fully connected + ReLU, rounded at prediction
//! time) and a linear embedding projection that is normalised and fed to a
//! metric loss during training. All gradients are hand-derived; the
//! optimiser is SGD with momentum. Training is single-threaded and bitwise
//! reproducible given (seed, config, dataset).

pub mod batcher;
pub mod eval;
pub mod network;
pub mod train;

pub use batcher::SmartBatcher;
pub use eval::{evaluate, predict, MetricsReport};
pub use network::{ConvNet, NetworkConfig};
pub use train::{train, DmlKind, TrainConfig, TrainReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("label {label} has {count} training samples; smart batching needs at least 2")]
    InsufficientLabelSamples { label: usize, count: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {context}")]
    NonFiniteLoss { epoch: usize, batch: usize, context: String },

    #[error("evaluation split is empty")]
    EmptySplit,

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Core(#[from] lar_core::CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;
