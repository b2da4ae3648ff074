//! Numeric building blocks. The finite-difference oracle here is what every
//! analytic gradient in the crate is checked against.

mod adam;
mod gradcheck;
mod matrix;
mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, finite_diff_grad_five_point, max_relative_error};
pub use matrix::{dot, matmul, Matrix};
pub use rng::Rng;
