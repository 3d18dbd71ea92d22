//! A small reverse-mode autodiff engine over dense tensors.
//!
//! Values are `f64` by default; the `f32` feature switches [`Real`] to `f32`.
//! Operations are methods on [`Var`], recorded on a [`Tape`]; trainable
//! tensors live in a [`ParameterSet`] and are bound to a tape by name.

pub mod checkpoint;
pub mod gradcheck;
mod ops;
pub mod optim;
mod params;
mod rng;
mod tape;
pub(crate) mod tensor;

#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;

pub use optim::{AdamW, AdamWConfig};
pub use params::{Parameter, ParameterSet};
pub use rng::RngStream;
pub use tape::{backward, BackwardArgs, BackwardFn, Gradients, Tape, Var};
pub use tensor::Tensor;
