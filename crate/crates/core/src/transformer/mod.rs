//! A small transformer encoder with its own reverse-mode gradients, Adam
//! training, and binary checkpoints.

pub mod checkpoint;
pub mod model;
pub mod optim;
pub mod tape;
pub mod train;

pub use model::{EncodedInput, ModelConfig, ModelParams};
pub use optim::AdamConfig;
pub use train::{LabeledInput, TrainConfig};
