//! Damped Newton solvers for `det(u_{ij̄}) = f` (Dirichlet, flat domains) and
//! `det(I + φ_{ij̄}) = e^c f` (flat torus), plus barriers, the radial
//! reduction and the ε/ρ continuation.

mod newton;
mod pipeline;
mod radial;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    complex_hessian, direction_basis, Boundary, GridDomain, HMat, ScalarField, Shape, MAX_DIRS,
};
use crate::grid::stencil::{Arm, StencilSet};
use crate::linsolve::{Csr, LinearOptions, LinearSolver};
use crate::par;
use newton::{newton, sup_norm, Eval, System};

pub use pipeline::{degenerate_pipeline, PipelineOutcome, StageRecord};
pub use radial::{radial_oracle, RadialProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Initializer {
    /// `ψ = K(|z - c|^2 - R^2)` from [`build_barrier`] (Dirichlet) or `φ = 0` (torus).
    Barrier,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Sup-norm tolerance on the log-det residual.
    pub tol: f64,
    pub shrink: f64,
    pub min_step: f64,
    /// Smallest admissible eigenvalue of the Hessian iterate.
    pub positivity_floor: f64,
    pub init: Initializer,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iter: 50,
            tol: 1e-10,
            shrink: 0.5,
            min_step: 1e-4,
            positivity_floor: 1e-10,
            init: Initializer::Barrier,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidOptions(format!("tolerance {} must be positive", self.tol)));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidOptions(format!("shrink factor {} not in (0, 1)", self.shrink)));
        }
        if !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return Err(Error::InvalidOptions(format!("minimum step {} not in (0, 1]", self.min_step)));
        }
        if !(self.positivity_floor > 0.0) {
            return Err(Error::InvalidOptions(format!(
                "positivity floor {} must be positive",
                self.positivity_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    /// Number of unknowns.
    pub nodes: usize,
    /// Smallest eigenvalue of the final Hessian field.
    pub eig_min: f64,
    pub factorizations: usize,
    pub gmres_iterations: usize,
    /// Torus only: the constant `c` in `det(I + φ_{ij̄}) = e^c f`.
    pub normalization: Option<f64>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// `ψ(z) = K(|z - c|^2 - R^2)` with `K = (sup f)^{1/m} + 1`, so that
/// `det ψ_{ij̄} = K^m > sup f`. Boxes use the circumscribed ball.
///
/// The returned field carries `ψ` itself as its boundary data (exact when the
/// domain is centred at the origin).
pub fn build_barrier(domain: &Arc<GridDomain>, sup_f: f64) -> Result<ScalarField> {
    let r = domain
        .enclosing_radius()
        .ok_or_else(|| Error::InvalidDomain("a barrier needs a ball or a box".into()))?;
    if !(sup_f >= 0.0) {
        return Err(Error::Domain(format!("sup f = {sup_f} is negative")));
    }
    let k = sup_f.powf(1.0 / domain.m() as f64) + 1.0;
    let c = domain.center();
    let boundary = match domain.shape() {
        Shape::Ball { .. } => Boundary::ZERO,
        _ => {
            let c2: f64 = c.iter().map(|v| v * v).sum();
            Boundary::Dirichlet { value: k * (c2 - r * r), quad: k }
        }
    };
    let axes = domain.axes();
    Ok(ScalarField::dirichlet_from_fn(domain.clone(), boundary, |x| {
        let d2: f64 = (0..axes).map(|a| (x[a] - c[a]).powi(2)).sum();
        k * (d2 - r * r)
    }))
}

fn check_density(f: &ScalarField, domain: &Arc<GridDomain>) -> Result<Vec<f64>> {
    let fd = f.domain();
    if fd.m() != domain.m() || fd.n() != domain.n() || fd.shape() != domain.shape() {
        return Err(Error::FieldMismatch("density lives on a different grid".into()));
    }
    let mut logs = Vec::with_capacity(domain.num_interior());
    for &node in domain.interior() {
        let v = f.get(node);
        if !(v > 0.0) {
            return Err(Error::InvalidDensity { node, value: v });
        }
        logs.push(v.ln());
    }
    Ok(logs)
}

/// Per-node `Re tr(W B_d) / h^2` for every direction `d`.
fn direction_coefficients(w: &HMat, basis: &[HMat], inv_h2: f64) -> [f64; MAX_DIRS] {
    let mut c = [0.0; MAX_DIRS];
    for (k, b) in basis.iter().enumerate() {
        c[k] = w.trace_product(b).re * inv_h2;
    }
    c
}

/// Row of `v ↦ tr(W v_{ij̄})` at interior slot `slot`; cut arms drop out
/// (their boundary values are fixed).
fn operator_row(
    domain: &GridDomain,
    stencils: &StencilSet,
    coef: &[f64; MAX_DIRS],
    slot: usize,
) -> Vec<(usize, f64)> {
    let mut row = Vec::with_capacity(1 + 2 * MAX_DIRS);
    let mut centre = 0.0;
    for (k, st) in stencils.at(slot).iter().enumerate() {
        let (wp, wc, wm) = st.second_weights();
        centre += coef[k] * wc;
        for (arm, w) in [(st.plus, wp), (st.minus, wm)] {
            if let Arm::Node(j) = arm {
                let col = domain.interior_slot(j).expect("stencil arms reach interior nodes only");
                row.push((col, coef[k] * w));
            }
        }
    }
    row.push((slot, centre));
    row
}

/// Hessian data at one iterate: inverses, residual and the eigenvalue floor.
fn hessian_state(
    field: &ScalarField,
    shift_identity: bool,
    log_f: &[f64],
    c: f64,
) -> Result<(Vec<f64>, Vec<HMat>, (usize, f64))> {
    let hess = complex_hessian(field)?;
    let hess = if shift_identity { hess.add_identity() } else { hess };
    let m = field.domain().m();
    let per: Vec<(f64, HMat, f64)> = par::map_range(hess.mats().len(), |k| {
        let a = hess.at(k);
        let e = a.eig_min();
        let det = a.det();
        let g = if e > 0.0 && det > 0.0 { det.ln() - c - log_f[k] } else { f64::INFINITY };
        (g, a.inverse().unwrap_or_else(|| HMat::zeros(m)), e)
    });
    let eigs: Vec<f64> = per.iter().map(|p| p.2).collect();
    let (slot, e) = par::argmin(&eigs).expect("non-empty interior");
    let node = field.domain().interior()[slot];
    let g = per.iter().map(|p| p.0).collect();
    let w = per.into_iter().map(|p| p.1).collect();
    Ok((g, w, (node, e)))
}

struct DirichletSystem {
    domain: Arc<GridDomain>,
    log_f: Vec<f64>,
    basis: Vec<HMat>,
}

impl System for DirichletSystem {
    type Aux = Vec<HMat>;

    fn len(&self) -> usize {
        self.domain.num_interior()
    }

    fn evaluate(&self, x: &[f64]) -> Result<Eval<Vec<HMat>>> {
        let u = ScalarField::from_interior(self.domain.clone(), x, Boundary::ZERO)?;
        let (g, w, eig_min) = hessian_state(&u, false, &self.log_f, 0.0)?;
        Ok(Eval { res: sup_norm(&g), g, eig_min, aux: w })
    }

    fn jacobian(&self, _x: &[f64], eval: &Eval<Vec<HMat>>) -> Csr {
        let d = &self.domain;
        let st = d.cut_stencils();
        let inv_h2 = 1.0 / (d.h() * d.h());
        let rows = par::map_range(d.num_interior(), |k| {
            let coef = direction_coefficients(&eval.aux[k], &self.basis, inv_h2);
            operator_row(d, st, &coef, k)
        });
        Csr::from_rows(d.num_interior(), rows)
    }
}

/// Solves `det u_{ij̄} = f` in a ball or box with `u = 0` on the boundary.
pub fn solve_dirichlet(
    domain: &Arc<GridDomain>,
    f: &ScalarField,
    opts: &SolveOptions,
) -> Result<(ScalarField, SolveReport)> {
    let mut linear = LinearSolver::new(LinearOptions::default());
    solve_dirichlet_with(domain, f, opts, None, &mut linear)
}

/// [`solve_dirichlet`] with an optional warm start and a caller-owned linear solver
/// (whose factorization is reused across calls).
pub fn solve_dirichlet_with(
    domain: &Arc<GridDomain>,
    f: &ScalarField,
    opts: &SolveOptions,
    start: Option<&ScalarField>,
    linear: &mut LinearSolver,
) -> Result<(ScalarField, SolveReport)> {
    opts.validate()?;
    if domain.is_periodic() {
        return Err(Error::InvalidDomain("Dirichlet problems need a ball or a box".into()));
    }
    let log_f = check_density(f, domain)?;
    let x0 = match (start, opts.init) {
        (Some(s), _) => s.interior_values(),
        (None, Initializer::Barrier) => {
            let sup_f = log_f.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v)).exp();
            build_barrier(domain, sup_f)?.interior_values()
        }
        (None, Initializer::Zero) => {
            return Err(Error::InvalidOptions("the zero initializer is not plurisubharmonic".into()))
        }
    };
    let sys = DirichletSystem { domain: domain.clone(), log_f, basis: direction_basis(domain.m()) };
    let (x, report) = newton(&sys, x0, opts, linear)?;
    Ok((ScalarField::from_interior(domain.clone(), &x, Boundary::ZERO)?, report))
}

struct TorusSystem {
    domain: Arc<GridDomain>,
    log_f: Vec<f64>,
    basis: Vec<HMat>,
}

impl System for TorusSystem {
    type Aux = Vec<HMat>;

    fn len(&self) -> usize {
        self.domain.num_interior() + 1
    }

    fn evaluate(&self, x: &[f64]) -> Result<Eval<Vec<HMat>>> {
        let n = self.domain.num_interior();
        let phi = ScalarField::from_interior(self.domain.clone(), &x[..n], Boundary::Nodal)?;
        let (mut g, w, eig_min) = hessian_state(&phi, true, &self.log_f, x[n])?;
        g.push(par::mean(&x[..n]));
        Ok(Eval { res: sup_norm(&g), g, eig_min, aux: w })
    }

    fn jacobian(&self, _x: &[f64], eval: &Eval<Vec<HMat>>) -> Csr {
        let d = &self.domain;
        let n = d.num_interior();
        let st = d.nodal_stencils();
        let inv_h2 = 1.0 / (d.h() * d.h());
        let mut rows = par::map_range(n, |k| {
            let coef = direction_coefficients(&eval.aux[k], &self.basis, inv_h2);
            let mut row = operator_row(d, st, &coef, k);
            row.push((n, -1.0));
            row
        });
        let w = 1.0 / n as f64;
        rows.push((0..n).map(|j| (j, w)).collect());
        Csr::from_rows(n + 1, rows)
    }
}

/// Solves `det(I + φ_{ij̄}) = e^c f` on the flat torus with `mean φ = 0`;
/// `c` is an unknown of the Newton system. Returns `(φ, c, report)`.
pub fn solve_torus(f: &ScalarField, opts: &SolveOptions) -> Result<(ScalarField, f64, SolveReport)> {
    let mut linear = LinearSolver::new(LinearOptions::default());
    solve_torus_with(f, opts, &mut linear)
}

pub fn solve_torus_with(
    f: &ScalarField,
    opts: &SolveOptions,
    linear: &mut LinearSolver,
) -> Result<(ScalarField, f64, SolveReport)> {
    opts.validate()?;
    let domain = f.domain().clone();
    if !domain.is_periodic() {
        return Err(Error::InvalidDomain("solve_torus needs a periodic domain".into()));
    }
    let log_f = check_density(f, &domain)?;
    let n = domain.num_interior();
    let fvals = f.interior_values();
    let mut x0 = vec![0.0; n + 1];
    x0[n] = -par::mean(&fvals).ln();
    let sys = TorusSystem { domain: domain.clone(), log_f, basis: direction_basis(domain.m()) };
    let (x, mut report) = newton(&sys, x0, opts, linear)?;
    report.normalization = Some(x[n]);
    let phi = ScalarField::from_interior(domain, &x[..n], Boundary::Nodal)?;
    Ok((phi, x[n], report))
}

/// `mean det(I + φ_{ij̄}) - 1` on the torus (zero exactly only for m = 1).
pub fn compatibility_defect(phi: &ScalarField) -> Result<f64> {
    let h = complex_hessian(phi)?.add_identity();
    let dets: Vec<f64> = h.mats().iter().map(HMat::det).collect();
    Ok(par::mean(&dets) - 1.0)
}

/// Sup over interior nodes of `|log det(u_{ij̄}) - log f|`.
pub fn log_det_residual(u: &ScalarField, f: &ScalarField) -> Result<f64> {
    let log_f = check_density(f, u.domain())?;
    let shift = u.domain().is_periodic();
    let (g, _, _) = hessian_state(u, shift, &log_f, 0.0)?;
    Ok(sup_norm(&g))
}

/// Direct solve of the linear problem `Δu = f`, `u = 0` on the boundary, with
/// the same stencils as the nonlinear solver. For m = 1 this is the
/// Monge-Ampère equation itself.
pub fn poisson_dirichlet(f: &ScalarField) -> Result<ScalarField> {
    let domain = f.domain().clone();
    if domain.is_periodic() {
        return Err(Error::InvalidDomain("Poisson oracle needs a ball or a box".into()));
    }
    let st = domain.cut_stencils();
    let axes = domain.axes();
    let inv_h2 = 1.0 / (domain.h() * domain.h());
    let mut coef = [0.0; MAX_DIRS];
    for c in coef.iter_mut().take(axes) {
        *c = 0.25 * inv_h2;
    }
    let rows = par::map_range(domain.num_interior(), |k| operator_row(&domain, st, &coef, k));
    let a = Csr::from_rows(domain.num_interior(), rows);
    let b = f.interior_values();
    let mut linear = LinearSolver::new(LinearOptions { rel_tol: 1e-13, ..Default::default() });
    let x = linear.solve(&a, &b)?;
    ScalarField::from_interior(domain, &x, Boundary::ZERO)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barrier_has_the_promised_determinant() {
        let d = Arc::new(GridDomain::ball(2, 9, 1.0).unwrap());
        let psi = build_barrier(&d, 1.0).unwrap();
        let h = complex_hessian(&psi).unwrap();
        for a in h.mats() {
            assert!((a.det() - 4.0).abs() < 1e-9);
        }
        let psi0 = build_barrier(&d, 0.0).unwrap();
        let h0 = complex_hessian(&psi0).unwrap();
        assert!(h0.mats().iter().all(|a| (a.det() - 1.0).abs() < 1e-10));
    }

    #[test]
    fn options_are_validated() {
        let bad = SolveOptions { shrink: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolveOptions { tol: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn flat_density_gives_the_paraboloid_in_one_variable() {
        let d = Arc::new(GridDomain::ball(1, 33, 1.0).unwrap());
        let f = ScalarField::constant(d.clone(), 1.0);
        let (u, rep) = solve_dirichlet(&d, &f, &SolveOptions::default()).unwrap();
        assert!(rep.converged);
        for &i in d.interior() {
            assert!((u.get(i) - (d.abs2(i) - 1.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_nonpositive_density() {
        let d = Arc::new(GridDomain::ball(1, 9, 1.0).unwrap());
        let f = ScalarField::constant(d.clone(), 0.0);
        assert!(matches!(
            solve_dirichlet(&d, &f, &SolveOptions::default()),
            Err(Error::InvalidDensity { .. })
        ));
    }

    #[test]
    fn torus_with_unit_density_stays_flat() {
        let d = Arc::new(GridDomain::torus(1, 8, 1.0).unwrap());
        let f = ScalarField::constant(d, 1.0);
        let (phi, c, rep) = solve_torus(&f, &SolveOptions::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(c, 0.0);
        assert!(phi.values().iter().all(|&v| v == 0.0));
    }
}
