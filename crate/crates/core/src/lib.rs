//! A finite-difference laboratory for the complex Monge-Ampère equation
//! `det(g_{ij̄} + φ_{ij̄}) = f det(g_{ij̄})` on flat domains in C^m (m = 1, 2).
//!
//! * [`grid`]: grids, fields, complex Hessians and Hermitian algebra.
//! * [`kahler`]: model Kähler metrics and the orthogonal bisectional curvature test.
//! * [`rhs`]: the density conditions and the ε-lift / mollification pipeline.
//! * [`solver`]: damped Newton for the Dirichlet and periodic problems, barriers,
//!   the radial reduction and the degenerate continuation.
//! * [`estimate`]: norms, the test function `H = (m + Δφ) e^{-α(φ)}`, and checks
//!   of each inequality used in the Laplacian estimate.
//!
//! The complex Laplacian is the trace `Δ = Σ_j ∂²/∂z^j∂z̄^j` throughout, a
//! quarter of the real Laplacian on R^{2m}.

pub mod error;
pub mod estimate;
pub mod grid;
pub mod kahler;
pub mod linsolve;
pub mod par;
pub mod rhs;
pub mod solver;

pub use error::{Error, Result};
