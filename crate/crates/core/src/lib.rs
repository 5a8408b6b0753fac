//! Synergistic CNN-Transformer network for hyperspectral image
//! classification.

pub mod autograd;
pub mod data;
pub mod error;
pub mod gradcheck;
mod kernels;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use autograd::{Grads, Graph, NormKind, NormStats, PoolAxis, PoolMode, Var};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Graph32 = Graph<f32>;
pub type Graph64 = Graph<f64>;
pub type Model32 = model::Model<f32>;
pub type Model64 = model::Model<f64>;
