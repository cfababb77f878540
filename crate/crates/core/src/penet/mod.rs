//! Small reverse-mode network stack: dense and permutation-equivariant
//! layers, MSE loss, Adam, training loop and checkpoints.

mod layers;
mod model;
mod optim;
mod tensor;
mod train;

pub use layers::{Dropout, Layer, Linear, PeLinear, Readout, PE_TERMS};
pub use model::{build_model, Family, Graph, Model, ModelConfig, Task, CHECKPOINT_MAGIC};
pub use optim::{mse_loss, Adam};
pub use tensor::Tensor;
pub use train::{evaluate_loss, train, train_with, Example, TrainConfig, TrainHistory};

#[cfg(test)]
mod tests;
