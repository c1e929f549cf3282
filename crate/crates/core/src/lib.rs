//! Diffusion latent optimization for PDE-constrained inverse problems.
//!
//! The inverse problem is solved by gradient descent on the initial noise
//! `z_T` of a deterministic DDIM trajectory: `z_T` is unrolled to a clean
//! latent, decoded to a physical parameter field, pushed through a
//! differentiable forward operator, and compared against observations.

pub mod diffusion;
pub mod dilo;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod networks;
pub mod physics;
pub mod rng;
pub mod surrogate;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::{Graph, Tensor, Var};
