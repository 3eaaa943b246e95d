//! Dense-tensor arithmetic, reverse-mode differentiation, Adam, and gradient
//! verification: the substrate the rest of the crate computes on.

pub mod adam;
pub mod gradcheck;
pub mod kernels;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use adam::Adam;
pub use gradcheck::{grad_check, GradCheckReport};
pub use params::{Gradients, ParamId, ParamStore};
pub use rng::{stream_rng, streams};
pub use tape::{GradTape, ValueId};
pub use tensor::Tensor;
