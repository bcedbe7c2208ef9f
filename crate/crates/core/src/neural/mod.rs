//! Minimal dense-network kernel with hand-derived gradients.
//!
//! Supports exactly what the representation model and downstream classifiers
//! need: dense layers, four activations, an adaptive first-order optimizer,
//! deterministic initialization, and a finite-difference gradient checker.
//! No autodiff; every backward pass here is the analytic gradient of the
//! matching forward pass.

mod gradcheck;
mod mlp;
mod optimizer;
pub mod serialize;

pub use gradcheck::{grad_check, GradCheckReport};
pub use mlp::{sigmoid, Activation, Mlp, MlpCache, MlpConfig, ParamTensor};
pub use optimizer::{Optimizer, OptimizerConfig};
