//! Minimal deterministic neural-network core.
//!
//! Layers are free functions in per-layer modules. Each `forward` returns
//! its output with a cache, and each `backward` takes that cache plus the
//! output gradient and returns gradients for the input and the layer's
//! parameters. Parameters live in a [`ParamStore`]; [`Adam`] updates them.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
mod linalg;
pub mod loss;
pub mod lstm;
pub mod params;
pub mod pool;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{grad_check, grad_check_sampled, GradFragment};
pub use params::{adam_step, Adam, Param, ParamStore};
pub use tensor::Tensor;
