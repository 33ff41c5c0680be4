//! Dense linear algebra, seeded randomness, assignment and least squares.

mod assign;
mod linalg;
mod matrix;
mod ols;
mod rng;

pub use assign::{assignment_score, brute_force_max, hungarian_max};
pub use linalg::{
    cholesky, column_space, condition_number, null_space, numeric_rank, orthonormalize_columns,
    pseudo_inverse, rank_from_singular_values, svd, Svd, DEFAULT_RANK_TOL,
};
pub use matrix::{dot, gemm, gemm_into, norm, Matrix};
pub use ols::{ols_fit, OlsDesign, OlsFit};
pub use rng::{RngStream, StreamFamily};
