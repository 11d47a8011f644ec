//! Dense arithmetic, a reproducible RNG, and finite-difference gradients.

mod finite_diff;
mod matrix;
mod rng;

pub use finite_diff::finite_diff_gradient;
pub use matrix::{elementwise, matmul, sigmoid, Elementwise, Matrix};
pub use rng::Rng;

pub(crate) use matrix::{dot, outer_acc, vec_mat_acc, vec_mat_t_acc};
