//! Comparison methods: MM with the looser linear bound, projected gradient on
//! the true objectives, and block diagonalization.

mod ascent;
mod bd;
mod gradient;
mod mm_linear;

pub use bd::{null_space_bases, solve_bd, BdOptions};
pub use gradient::{solve_projected_gradient, GradientOptions};
pub use mm_linear::{solve_mm_linear_hybrid, solve_mm_linear_sum, MmLinearOptions};
