use num_complex::Complex64;

use super::domain::MAX_AXES;
use super::field::{Boundary, ScalarField};
use super::hermitian::{HMat, HermitianField};
use super::stencil::{directions, gradient_at, real_hessian, second_differences, MAX_DIRS};
use crate::error::Result;
use crate::par;

/// `u_{jk̄} = ¼[(u_{x_j x_k} + u_{y_j y_k}) + i(u_{x_j y_k} − u_{y_j x_k})]` from a
/// real Hessian. Only the upper triangle is computed; the lower one is its
/// conjugate, so the result is Hermitian bit for bit.
pub fn complex_from_real(m: usize, hess: &[[f64; MAX_AXES]; MAX_AXES]) -> HMat {
    let mut a = HMat::zeros(m);
    for j in 0..m {
        let (xj, yj) = (2 * j, 2 * j + 1);
        a.set(j, j, Complex64::new(0.25 * (hess[xj][xj] + hess[yj][yj]), 0.0));
        for k in (j + 1)..m {
            let (xk, yk) = (2 * k, 2 * k + 1);
            let v = Complex64::new(
                0.25 * (hess[xj][xk] + hess[yj][yk]),
                0.25 * (hess[xj][yk] - hess[yj][xk]),
            );
            a.set(j, k, v);
            a.set(k, j, v.conj());
        }
    }
    a
}

/// Complex Hessian from directional second differences.
pub fn complex_from_differences(m: usize, d2: &[f64; MAX_DIRS]) -> HMat {
    complex_from_real(m, &real_hessian(2 * m, d2))
}

/// Matrices `B_d` with `complex Hessian = Σ_d D2[d] B_d`.
pub fn direction_basis(m: usize) -> Vec<HMat> {
    let nd = directions(2 * m).len();
    (0..nd)
        .map(|d| {
            let mut unit = [0.0; MAX_DIRS];
            unit[d] = 1.0;
            complex_from_differences(m, &unit)
        })
        .collect()
}

/// Complex Hessian `u_{jk̄} = ∂²u/∂z^j∂z̄^k` at every interior node.
///
/// Dirichlet fields use cut-cell stencils; nodal fields read neighbour values
/// and fail with `BoundaryDataMissing` if one has none.
pub fn complex_hessian(u: &ScalarField) -> Result<HermitianField> {
    let domain = u.domain().clone();
    let m = domain.m();
    let mats = par::try_map_range(domain.num_interior(), |slot| {
        second_differences(u, slot).map(|d2| complex_from_differences(m, &d2))
    })?;
    HermitianField::new(domain, mats)
}

/// `Δu = Σ_j u_{jj̄}`, a quarter of the real Laplacian on `R^{2m}`.
pub fn complex_laplacian(u: &ScalarField) -> Result<ScalarField> {
    let domain = u.domain().clone();
    let axes = domain.axes();
    let lap = par::try_map_range(domain.num_interior(), |slot| {
        second_differences(u, slot).map(|d2| 0.25 * d2[..axes].iter().sum::<f64>())
    })?;
    ScalarField::from_interior(domain, &lap, Boundary::Nodal)
}

/// Real gradient at every interior node (second-order central or cut-cell differences).
pub fn gradient(u: &ScalarField) -> Result<Vec<[f64; MAX_AXES]>> {
    par::try_map_range(u.domain().num_interior(), |slot| gradient_at(u, slot))
}

/// Complex derivatives `∂u/∂z^j = ½(u_x − i u_y)` from a real gradient.
pub fn complex_gradient(m: usize, g: &[f64; MAX_AXES]) -> [Complex64; 2] {
    let mut out = [Complex64::new(0.0, 0.0); 2];
    for (j, o) in out.iter_mut().enumerate().take(m) {
        *o = Complex64::new(0.5 * g[2 * j], -0.5 * g[2 * j + 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::grid::GridDomain;

    #[test]
    fn paraboloid_has_identity_hessian_on_the_ball() {
        let d = Arc::new(GridDomain::ball(2, 9, 1.0).unwrap());
        let u = ScalarField::from_fn(d.clone(), |x| x.iter().map(|v| v * v).sum::<f64>() - 1.0);
        let h = complex_hessian(&u).unwrap();
        for a in h.mats() {
            assert!((a.get(0, 0).re - 1.0).abs() < 1e-12);
            assert!((a.get(1, 1).re - 1.0).abs() < 1e-12);
            assert!(a.get(0, 1).norm() < 1e-12);
            assert!(a.is_exactly_hermitian());
        }
        let cut = u.clone().with_boundary(Boundary::ZERO);
        let h = complex_hessian(&cut).unwrap();
        for a in h.mats() {
            assert!((a.get(0, 0).re - 1.0).abs() < 1e-10);
            assert!(a.get(0, 1).norm() < 1e-10);
        }
    }

    #[test]
    fn constant_has_zero_hessian() {
        let d = Arc::new(GridDomain::torus(2, 6, 1.0).unwrap());
        let h = complex_hessian(&ScalarField::constant(d, 3.5)).unwrap();
        assert!(h.mats().iter().all(|a| a.max_abs() == 0.0));
    }

    #[test]
    fn nodal_stencil_needs_band_values() {
        let d = Arc::new(GridDomain::ball(1, 9, 1.0).unwrap());
        let interior = vec![1.0; d.num_interior()];
        let u = ScalarField::from_interior(d, &interior, Boundary::Nodal).unwrap();
        assert!(matches!(
            complex_hessian(&u),
            Err(crate::Error::BoundaryDataMissing { .. })
        ));
    }

    #[test]
    fn basis_reproduces_the_hessian() {
        let basis = direction_basis(2);
        let mut d2 = [0.0; MAX_DIRS];
        for (k, v) in d2.iter_mut().enumerate() {
            *v = (k as f64 * 0.37).sin();
        }
        let direct = complex_from_differences(2, &d2);
        let mut sum = HMat::zeros(2);
        for (k, b) in basis.iter().enumerate() {
            sum = sum.add(&b.scale(d2[k]));
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!((sum.get(i, j) - direct.get(i, j)).norm() < 1e-14);
            }
        }
    }
}
