use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::domain::GridDomain;
use super::field::{Boundary, ScalarField};
use crate::error::{Error, Result};
use crate::par;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Hermitian `m x m` matrix with `m <= 2`, stored densely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HMat {
    m: usize,
    e: [[Complex64; 2]; 2],
}

impl HMat {
    pub fn zeros(m: usize) -> Self {
        assert!((1..=2).contains(&m));
        HMat { m, e: [[ZERO; 2]; 2] }
    }

    pub fn identity(m: usize) -> Self {
        Self::diag(&vec![1.0; m])
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut a = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            a.e[i][i] = Complex64::new(v, 0.0);
        }
        a
    }

    /// Builds from row-major entries; only the upper triangle is read, the rest
    /// is filled by conjugation.
    pub fn from_upper(m: usize, entries: &[Complex64]) -> Self {
        let mut a = Self::zeros(m);
        for i in 0..m {
            a.e[i][i] = Complex64::new(entries[i * m + i].re, 0.0);
            for j in (i + 1)..m {
                a.e[i][j] = entries[i * m + j];
                a.e[j][i] = entries[i * m + j].conj();
            }
        }
        a
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.e[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.e[i][j] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.m).map(|i| self.e[i][i].re).sum()
    }

    pub fn det(&self) -> f64 {
        match self.m {
            1 => self.e[0][0].re,
            _ => self.e[0][0].re * self.e[1][1].re - self.e[0][1].norm_sqr(),
        }
    }

    /// Inverse via the adjugate; `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<HMat> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let mut inv = HMat::zeros(self.m);
        match self.m {
            1 => inv.e[0][0] = Complex64::new(1.0 / det, 0.0),
            _ => {
                inv.e[0][0] = Complex64::new(self.e[1][1].re / det, 0.0);
                inv.e[1][1] = Complex64::new(self.e[0][0].re / det, 0.0);
                inv.e[0][1] = -self.e[0][1] / det;
                inv.e[1][0] = -self.e[1][0] / det;
            }
        }
        Some(inv)
    }

    /// Eigenvalues in ascending order (only the first `m` are meaningful).
    pub fn eigenvalues(&self) -> [f64; 2] {
        match self.m {
            1 => [self.e[0][0].re, f64::NAN],
            _ => {
                let a = self.e[0][0].re;
                let d = self.e[1][1].re;
                let mean = 0.5 * (a + d);
                let r = (0.25 * (a - d) * (a - d) + self.e[0][1].norm_sqr()).sqrt();
                [mean - r, mean + r]
            }
        }
    }

    pub fn eig_min(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Ascending eigenvalues and a unitary `U` whose columns are matching
    /// eigenvectors, so that `U* A U` is diagonal.
    pub fn eigh(&self) -> ([f64; 2], [[Complex64; 2]; 2]) {
        let one = Complex64::new(1.0, 0.0);
        let lam = self.eigenvalues();
        let mut u = [[ZERO; 2]; 2];
        if self.m == 1 {
            u[0][0] = one;
            return (lam, u);
        }
        let a = self.e[0][0].re;
        let d = self.e[1][1].re;
        let b = self.e[0][1];
        if b.norm() == 0.0 {
            if a <= d {
                u = [[one, ZERO], [ZERO, one]];
            } else {
                u = [[ZERO, one], [one, ZERO]];
            }
            return (lam, u);
        }
        // (a - λ) v1 + b v2 = 0; pick whichever form is better conditioned
        let (p, q) = if (lam[0] - a).abs() >= (lam[0] - d).abs() {
            (b, Complex64::new(lam[0] - a, 0.0))
        } else {
            (Complex64::new(lam[0] - d, 0.0), b.conj())
        };
        let n = (p.norm_sqr() + q.norm_sqr()).sqrt();
        let (p, q) = (p / n, q / n);
        u[0][0] = p;
        u[1][0] = q;
        u[0][1] = -q.conj();
        u[1][1] = p.conj();
        (lam, u)
    }

    /// `tr(self * other)`.
    pub fn trace_product(&self, other: &HMat) -> Complex64 {
        let mut t = ZERO;
        for i in 0..self.m {
            for k in 0..self.m {
                t += self.e[i][k] * other.e[k][i];
            }
        }
        t
    }

    pub fn mul(&self, other: &HMat) -> [[Complex64; 2]; 2] {
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate().take(self.m) {
            for (j, v) in row.iter_mut().enumerate().take(self.m) {
                for k in 0..self.m {
                    *v += self.e[i][k] * other.e[k][j];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &HMat) -> HMat {
        let mut out = *self;
        for i in 0..self.m {
            for j in 0..self.m {
                out.e[i][j] += other.e[i][j];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> HMat {
        let mut out = *self;
        for i in 0..self.m {
            for j in 0..self.m {
                out.e[i][j] *= s;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        let mut v: f64 = 0.0;
        for i in 0..self.m {
            for j in 0..self.m {
                v = v.max(self.e[i][j].norm());
            }
        }
        v
    }

    /// Largest `|A_ij - conj(A_ji)|` relative to the largest entry.
    pub fn hermitian_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.m {
            for j in 0..self.m {
                d = d.max((self.e[i][j] - self.e[j][i].conj()).norm());
            }
        }
        let s = self.max_abs();
        if s == 0.0 {
            d
        } else {
            d / s
        }
    }

    pub fn is_exactly_hermitian(&self) -> bool {
        (0..self.m).all(|i| (0..self.m).all(|j| self.e[i][j] == self.e[j][i].conj()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Positivity {
    None,
    SemiDefinite,
    Definite,
}

/// One Hermitian matrix per interior node, in [`GridDomain::interior`] order.
#[derive(Debug, Clone)]
pub struct HermitianField {
    domain: Arc<GridDomain>,
    mats: Vec<HMat>,
    positivity: Positivity,
}

impl HermitianField {
    /// Wraps matrices and classifies them (semi-definite allows `-1e-12` relative slack).
    pub fn new(domain: Arc<GridDomain>, mats: Vec<HMat>) -> Result<Self> {
        if mats.len() != domain.num_interior() {
            return Err(Error::FieldMismatch(format!(
                "{} matrices for {} interior nodes",
                mats.len(),
                domain.num_interior()
            )));
        }
        if let Some(a) = mats.iter().find(|a| a.m() != domain.m()) {
            return Err(Error::FieldMismatch(format!("{}x{} matrix on an m = {} domain", a.m(), a.m(), domain.m())));
        }
        let positivity = classify(&mats);
        Ok(HermitianField { domain, mats, positivity })
    }

    pub fn constant(domain: Arc<GridDomain>, a: HMat) -> Result<Self> {
        let mats = vec![a; domain.num_interior()];
        Self::new(domain, mats)
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn mats(&self) -> &[HMat] {
        &self.mats
    }

    pub fn at(&self, slot: usize) -> &HMat {
        &self.mats[slot]
    }

    pub fn positivity(&self) -> Positivity {
        self.positivity
    }

    /// Smallest eigenvalue over all nodes and the interior slot where it occurs.
    pub fn eig_min(&self) -> (usize, f64) {
        let mins: Vec<f64> = par::map_slice(&self.mats, HMat::eig_min);
        par::argmin(&mins).expect("non-empty field")
    }

    pub fn add_identity(&self) -> HermitianField {
        let id = HMat::identity(self.domain.m());
        let mats = self.mats.iter().map(|a| a.add(&id)).collect();
        HermitianField::new(self.domain.clone(), mats).expect("same shape")
    }

    pub fn trace(&self) -> ScalarField {
        let tr: Vec<f64> = self.mats.iter().map(HMat::trace).collect();
        ScalarField::from_interior(self.domain.clone(), &tr, Boundary::Nodal).expect("same shape")
    }
}

fn classify(mats: &[HMat]) -> Positivity {
    let mut definite = true;
    for a in mats {
        let e = a.eig_min();
        if e > 0.0 {
            continue;
        }
        definite = false;
        if !(e >= -1e-12 * a.max_abs().max(1.0)) {
            return Positivity::None;
        }
    }
    if definite {
        Positivity::Definite
    } else {
        Positivity::SemiDefinite
    }
}

/// Node-wise determinants and inverses.
#[derive(Debug, Clone)]
pub struct DetInverse {
    pub det: ScalarField,
    /// Zero matrices at singular nodes.
    pub inverse: HermitianField,
    /// Interior slots whose matrix is singular.
    pub singular: Vec<usize>,
}

pub fn hermitian_det_inv(field: &HermitianField) -> DetInverse {
    let domain = field.domain().clone();
    let m = domain.m();
    let per_node: Vec<(f64, Option<HMat>)> = par::map_slice(field.mats(), |a| {
        let det = a.det();
        let scale = a.max_abs().powi(m as i32);
        let inv = if det.abs() <= 4.0 * f64::EPSILON * scale { None } else { a.inverse() };
        (det, inv)
    });
    let det: Vec<f64> = per_node.iter().map(|(d, _)| *d).collect();
    let mut singular = Vec::new();
    let inverse: Vec<HMat> = per_node
        .iter()
        .enumerate()
        .map(|(k, (_, inv))| {
            inv.unwrap_or_else(|| {
                singular.push(k);
                HMat::zeros(m)
            })
        })
        .collect();
    DetInverse {
        det: ScalarField::from_interior(domain.clone(), &det, Boundary::Nodal).expect("same shape"),
        inverse: HermitianField::new(domain, inverse).expect("same shape"),
        singular,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_for_two_by_two() {
        let a = HMat::from_upper(2, &[Complex64::new(2.0, 0.0), Complex64::new(1.0, 1.0), ZERO, Complex64::new(3.0, 0.0)]);
        assert!(a.is_exactly_hermitian());
        assert_eq!(a.det(), 4.0);
        let inv = a.inverse().unwrap();
        let prod = a.mul(&inv);
        assert!((prod[0][0] - 1.0).norm() < 1e-15 && prod[0][1].norm() < 1e-15);
        let [l0, l1] = a.eigenvalues();
        assert!((l0 * l1 - 4.0).abs() < 1e-12 && (l0 + l1 - 5.0).abs() < 1e-12);
    }

    #[test]
    fn eigh_diagonalizes() {
        for a in [
            HMat::from_upper(2, &[Complex64::new(2.0, 0.0), Complex64::new(1.0, -0.5), ZERO, Complex64::new(0.5, 0.0)]),
            HMat::from_upper(2, &[Complex64::new(1.0, 0.0), Complex64::new(1e-9, 0.0), ZERO, Complex64::new(1.0, 0.0)]),
            HMat::diag(&[3.0, 1.0]),
        ] {
            let (lam, u) = a.eigh();
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = ZERO;
                    for k in 0..2 {
                        for l in 0..2 {
                            s += u[k][i].conj() * a.get(k, l) * u[l][j];
                        }
                    }
                    let want = if i == j { lam[i] } else { 0.0 };
                    assert!((s - want).norm() < 1e-12, "{s} vs {want}");
                }
            }
        }
    }

    #[test]
    fn diag_field_det_and_inverse() {
        let d = Arc::new(GridDomain::torus(2, 5, 1.0).unwrap());
        let f = HermitianField::constant(d, HMat::diag(&[2.0, 3.0])).unwrap();
        let out = hermitian_det_inv(&f);
        assert!(out.singular.is_empty());
        assert!(out.det.interior_values().iter().all(|&v| v == 6.0));
        let inv = out.inverse.at(0);
        assert_eq!(inv.get(0, 0).re, 0.5);
        assert!((inv.get(1, 1).re - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn singular_nodes_are_reported() {
        let d = Arc::new(GridDomain::torus(1, 5, 1.0).unwrap());
        let mut mats = vec![HMat::identity(1); d.num_interior()];
        mats[7] = HMat::zeros(1);
        let f = HermitianField::new(d, mats).unwrap();
        assert_eq!(f.positivity(), Positivity::SemiDefinite);
        let out = hermitian_det_inv(&f);
        assert_eq!(out.singular, vec![7]);
    }
}
