//! A self-contained float64 neural-network core.
//!
//! Models are described by a [`ModelSpec`] (an ordered list of [`LayerSpec`]s)
//! and carry their weights in [`Params`]. Batches flow through the network as
//! [`Tensor`]s laid out batch-first: `[batch, length, channels]` for sequences
//! and `[batch, features]` once flattened.

mod activation;
mod error;
mod layers;
mod loss;
mod model;
mod optim;
mod params;
mod spec;
mod tensor;
mod train;

pub use activation::{elu, relu, sigmoid, softmax, tanh, ActivationKind};
pub use error::{NnError, Result};
pub use layers::gru::{gru_step, GruWeights};
pub use loss::{binary_cross_entropy, cross_entropy, LossKind, PROB_FLOOR};
pub use model::{backward, forward, predict, ForwardCache, Gradients};
pub use optim::{Adam, AdamConfig};
pub use params::Params;
pub use spec::{LayerSpec, ModelSpec, Shape};
pub use tensor::Tensor;
pub use train::{accuracy, train, train_from, Dataset, EpochStats, TrainConfig};
