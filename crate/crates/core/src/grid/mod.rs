//! Discrete complex calculus on uniform grids over C^m.

mod domain;
mod field;
mod hermitian;
mod ops;
pub mod snapshot;
pub(crate) mod stencil;

pub use domain::{GridDomain, NodeClass, Offset, Point, Shape, MAX_AXES};
pub use field::{Boundary, ScalarField};
pub use hermitian::{hermitian_det_inv, DetInverse, HMat, HermitianField, Positivity};
pub use ops::{
    complex_from_differences, complex_from_real, complex_gradient, complex_hessian, complex_laplacian,
    direction_basis, gradient,
};
pub use stencil::{directions, pair_dir, real_hessian, MAX_DIRS};
