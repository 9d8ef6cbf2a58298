//! Dual-head transformer encoder: a token head over the vocabulary and a
//! five-way warping-operation head, trained on the sum of their
//! cross-entropies.

mod batch;
pub mod checkpoint;
mod config;
mod encoder;
mod objective;
mod optim;
mod params;
pub mod tensor;
mod train;

pub use batch::{Batch, Example};
pub use config::ModelConfig;
pub use objective::{backward, forward, loss, loss_and_grad, BatchStats, Logits};
pub use optim::{AdamState, OptimizerConfig};
pub use params::{layout, ModelParams, TensorSpec};
pub use tensor::Float;
pub use train::{evaluate, train, CurvePoint, TrainConfig, Trainer};
