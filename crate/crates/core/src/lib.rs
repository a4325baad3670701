//! Sparse spike recovery from unstructured kernel samples.
//!
//! Given noisy observations `u(s_j) = Σ_k G(s_j, x_k) w_k` of an unknown
//! spike train at arbitrary sample points, the crate builds data-driven
//! *eigenmatrices* `M^t` whose approximate eigenvectors are the normalized
//! kernel vectors `ĝ(x)` with eigenvalues `x^t` (or `x¹ + i x²` in the 2D
//! complex embedding), then runs an ESPRIT-style extraction on the Krylov
//! matrix `[ũ, …, M^α ũ, …]` to read off spike locations and weights.
//!
//! Module map:
//!
//! * [`kernel`]: kernel functions, sample sets, forward map.
//! * [`grid`]: product Chebyshev / circle proxy grids.
//! * [`eigenmatrix`]: `M^t = Ĝ Λ^t Ĝ⁺` with thresholded pseudoinverse.
//! * [`recovery`]: Krylov columns, shift submatrices, joint extraction,
//!   weight solve and Gauss–Newton refinement.
//! * [`harness`]: synthetic problems, noise, matching, trials and sweeps.
//!
//! Data-parallel loops go through [`exec::Execution`]; with the `parallel`
//! feature disabled every loop runs sequentially.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigenmatrix;
pub mod error;
pub mod exec;
pub mod grid;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod points;
pub mod recovery;
pub mod seed;
pub mod serde_float;

pub use error::{Error, Result};
pub use exec::Execution;
pub use points::Points;

/// Complex scalar used throughout; identical to `faer::c64`.
pub type C64 = num_complex::Complex64;
