//! Dense tensors, the DFT, differentiable layers, the gradient tape, and
//! the optimizer step.
//!
//! All kernel functions are pure over their inputs. A [`GradTape`] is
//! single-owner: record one forward pass on it, then call
//! [`GradTape::backward`].

pub mod adam;
pub mod dft;
pub mod eig;
pub mod layers;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dft::{dft, dft_magnitude, dft_magnitude_backward};
pub use eig::{hermitian_eig, SymmetricEigen};
pub use layers::{gelu, layernorm, linear, matvec, mean_pool, sigmoid, softmax};
pub use tape::{Adjoint, GradTape, Gradients, Var};
pub use tensor::Tensor;
