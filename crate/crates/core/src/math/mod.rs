//! Linear algebra, seeded randomness, the Adam optimizer and the
//! finite-difference gradient oracle.

mod adam;
mod finite_diff;
mod matrix;
pub mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use finite_diff::{finite_diff_grad, max_relative_error};
pub use matrix::{axpy, dot, Matrix};
pub use rng::{he_gaussian_init, Rng};
