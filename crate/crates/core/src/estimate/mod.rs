//! Diagnostics of the Laplacian estimate: norms of `φ`, the test function
//! `H = (m + Δφ) e^{-α(φ)}` and the quantities evaluated at its maximum, the
//! node-wise inequality `Σ g'^{iī} ≥ ((m + Δφ)/f)^{1/(m-1)}`, the closing fit,
//! and the pointwise lemmas in [`lemmas`].
//!
//! Gradients of scalar data are complex, `φ_k = ∂φ/∂z^k`, with
//! `|∇φ|^2 = Σ_k |φ_k|^2` (a quarter of the real squared norm), except in
//! [`norms`], which reports the real Euclidean gradient.

pub mod lemmas;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::stencil::{gradient_at, second_differences};
use crate::grid::{
    complex_from_differences, complex_gradient, complex_hessian, complex_laplacian, gradient, Boundary,
    GridDomain, HMat, HermitianField, ScalarField, MAX_AXES, MAX_DIRS,
};
use crate::grid::directions;
use crate::par;
use crate::rhs::lift_exponent;

pub use lemmas::{
    lemma_case_split, lemma_newton_inequality, lemma_third_order_bound, run_all_suites, CaseSplit, Fault,
    LemmaCheck, SuiteReport, ThirdOrderInput,
};

/// `C0 = 1 + 4m^2/(m-1)`; for `m = 1` (where the formula breaks down) `1 + 4m^2`.
pub fn c0(m: usize) -> f64 {
    let mf = m as f64;
    if m >= 2 {
        1.0 + 4.0 * mf * mf / (mf - 1.0)
    } else {
        1.0 + 4.0 * mf * mf
    }
}

/// `α(x) = log(x) / C0` and the range `[2, λ]` that `φ` is shifted into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionConfig {
    pub m: usize,
    pub c0: f64,
    /// `None` picks `λ = 2 + osc(φ) + 1e-6`.
    pub lambda: Option<f64>,
}

impl TestFunctionConfig {
    pub fn new(m: usize) -> Self {
        TestFunctionConfig { m, c0: c0(m), lambda: None }
    }

    pub fn alpha(&self, x: f64) -> f64 {
        x.ln() / self.c0
    }

    pub fn alpha1(&self, x: f64) -> f64 {
        1.0 / (self.c0 * x)
    }

    pub fn alpha2(&self, x: f64) -> f64 {
        -1.0 / (self.c0 * x * x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub osc: f64,
    /// Largest Euclidean norm of the real gradient.
    pub sup_grad: f64,
    /// `sup |Δφ|`.
    pub sup_lap: f64,
    pub min_m_plus_lap: f64,
}

pub fn norms(phi: &ScalarField) -> Result<Norms> {
    let d = phi.domain();
    let m = d.m() as f64;
    let (lo, hi) = phi.interior_range();
    let grads = gradient(phi)?;
    let gn: Vec<f64> = grads.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let lap = complex_laplacian(phi)?.interior_values();
    let abs_lap: Vec<f64> = lap.iter().map(|v| v.abs()).collect();
    Ok(Norms {
        osc: hi - lo,
        sup_grad: par::argmax(&gn).map_or(0.0, |x| x.1),
        sup_lap: par::argmax(&abs_lap).map_or(0.0, |x| x.1),
        min_m_plus_lap: m + par::argmin(&lap).map_or(0.0, |x| x.1),
    })
}

/// `φ = u - |z|^2` for a solution of `det u_{ij̄} = f` on a flat domain, with
/// matching boundary data.
pub fn potential_from_solution(u: &ScalarField) -> ScalarField {
    let d = u.domain().clone();
    let boundary = match u.boundary() {
        Boundary::Dirichlet { value, quad } => Boundary::Dirichlet { value, quad: quad - 1.0 },
        Boundary::Nodal => Boundary::Nodal,
    };
    let vals = par::map_range(d.num_nodes(), |i| u.get(i) - d.abs2(i));
    ScalarField::from_values(d, vals, boundary).expect("same grid")
}

/// Derivative along real axis `axis` of data known at interior nodes only:
/// central where both neighbours are interior, one-sided otherwise.
fn axis_derivative<F: Fn(usize) -> f64>(d: &GridDomain, node: usize, axis: usize, val: F) -> Option<f64> {
    let step = |k: i64| {
        let mut o = [0i64; MAX_AXES];
        o[axis] = k;
        d.neighbor(node, &o).filter(|&j| d.interior_slot(j).is_some())
    };
    let h = d.h();
    let v0 = val(node);
    match (step(1), step(-1)) {
        (Some(p), Some(q)) => Some((val(p) - val(q)) / (2.0 * h)),
        (Some(p), None) => match step(2) {
            Some(pp) => Some((-3.0 * v0 + 4.0 * val(p) - val(pp)) / (2.0 * h)),
            None => Some((val(p) - v0) / h),
        },
        (None, Some(q)) => match step(-2) {
            Some(qq) => Some((3.0 * v0 - 4.0 * val(q) + val(qq)) / (2.0 * h)),
            None => Some((v0 - val(q)) / h),
        },
        (None, None) => None,
    }
}

/// `∂/∂z^k` of interior-only data, `k < m`.
fn complex_derivative<F: Fn(usize) -> f64 + Copy>(d: &GridDomain, node: usize, k: usize, val: F) -> Option<Complex64> {
    let dx = axis_derivative(d, node, 2 * k, val)?;
    let dy = axis_derivative(d, node, 2 * k + 1, val)?;
    Some(Complex64::new(0.5 * dx, -0.5 * dy))
}

/// Complex Hessian of interior-only data at `node`, if every neighbour is interior.
fn interior_hessian<F: Fn(usize) -> f64>(d: &GridDomain, node: usize, val: F) -> Option<HMat> {
    let dirs = directions(d.axes());
    let inv_h2 = 1.0 / (d.h() * d.h());
    let mut d2 = [0.0; MAX_DIRS];
    let v0 = val(node);
    for (k, dir) in dirs.iter().enumerate() {
        let mut neg = *dir;
        for x in neg.iter_mut() {
            *x = -*x;
        }
        let p = d.neighbor(node, dir).filter(|&j| d.interior_slot(j).is_some())?;
        let q = d.neighbor(node, &neg).filter(|&j| d.interior_slot(j).is_some())?;
        d2[k] = (val(p) - 2.0 * v0 + val(q)) * inv_h2;
    }
    Some(complex_from_differences(d.m(), &d2))
}

/// `H` over the interior and what happens at its maximum.
#[derive(Debug, Clone)]
pub struct HProfile {
    pub h: ScalarField,
    /// Node of the maximum (lowest node id among ties).
    pub p: usize,
    pub h_max: f64,
    /// `φ` was shifted by this amount so that `min φ = 2`.
    pub shift: f64,
    pub lambda: f64,
    /// Shifted `φ(p)`.
    pub phi_p: f64,
    pub m_plus_lap_p: f64,
    /// `(Δφ)_γ - α' φ_γ (m + Δφ)` at `p` for each real direction `γ`.
    pub grad_eq: Vec<f64>,
    /// Euclidean norm of `grad_eq`.
    pub grad_eq_residual: f64,
    /// `g'^{ij̄} H_{ij̄}(p)`, when every neighbour of `p` is interior.
    pub max_principle: Option<f64>,
    /// Allowance `10 h tr(g'^{-1}) H(p)` for `max_principle`.
    pub max_principle_tau: f64,
}

/// Builds `H = (m + Δφ) e^{-α(φ)}` after shifting `φ` into `[2, λ]`.
pub fn profile_h(phi: &ScalarField, gprime: &HermitianField, cfg: &TestFunctionConfig) -> Result<HProfile> {
    let d = phi.domain().clone();
    if cfg.m != d.m() {
        return Err(Error::FieldMismatch(format!("config for m = {} on an m = {} grid", cfg.m, d.m())));
    }
    let m = d.m() as f64;
    let lap = complex_laplacian(phi)?;
    for &node in d.interior() {
        let v = m + lap.get(node);
        if !(v > 0.0) {
            return Err(Error::Admissibility { node, value: v });
        }
    }
    let (lo, hi) = phi.interior_range();
    let shift = 2.0 - lo;
    let lambda = cfg.lambda.unwrap_or(2.0 + (hi - lo) + 1e-6);
    if !(lambda > 2.0) || hi + shift > lambda {
        return Err(Error::Domain(format!("λ = {lambda} does not cover the shifted range [2, {}]", hi + shift)));
    }
    let shifted = |node: usize| phi.get(node) + shift;
    let hv: Vec<f64> = par::map_range(d.num_interior(), |k| {
        let node = d.interior()[k];
        (m + lap.get(node)) * (-cfg.alpha(shifted(node))).exp()
    });
    let (p_slot, h_max) = par::argmax(&hv).expect("non-empty interior");
    let p = d.interior()[p_slot];
    let hfield = ScalarField::from_interior(d.clone(), &hv, Boundary::Nodal)?;

    let phi_p = shifted(p);
    let mpl = m + lap.get(p);
    let a1 = cfg.alpha1(phi_p);
    let g = gradient_at(phi, p_slot)?;
    let mut grad_eq = Vec::with_capacity(d.axes());
    for axis in 0..d.axes() {
        let dl = axis_derivative(&d, p, axis, |j| lap.get(j))
            .ok_or_else(|| Error::Domain("isolated interior node".into()))?;
        grad_eq.push(dl - a1 * g[axis] * mpl);
    }
    let grad_eq_residual = grad_eq.iter().map(|v| v * v).sum::<f64>().sqrt();

    let w = gprime.at(p_slot).inverse().ok_or_else(|| Error::Admissibility { node: p, value: 0.0 })?;
    let max_principle = interior_hessian(&d, p, |j| hfield.get(j)).map(|hh| w.trace_product(&hh).re);
    let max_principle_tau = 10.0 * d.h() * w.trace() * h_max;
    Ok(HProfile {
        h: hfield,
        p,
        h_max,
        shift,
        lambda,
        phi_p,
        m_plus_lap_p: mpl,
        grad_eq,
        grad_eq_residual,
        max_principle,
        max_principle_tau,
    })
}

/// Diagnostics of one solved instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub m: usize,
    pub osc: f64,
    pub sup_grad: f64,
    pub sup_lap: f64,
    pub min_m_plus_lap: f64,
    pub lambda: f64,
    pub shift: f64,
    pub h_max_node: Option<usize>,
    pub h_max: Option<f64>,
    /// `m + Δφ(p)`.
    pub m_plus_lap_at_p: Option<f64>,
    pub grad_eq_residual: Option<f64>,
    pub max_principle: Option<f64>,
    pub max_principle_tau: Option<f64>,
    /// `Σ g'^{iī}` at `p`.
    pub eqm1_lhs: Option<f64>,
    /// `((m + Δφ)/f)^{1/(m-1)}` at `p`.
    pub eqm1_rhs: Option<f64>,
    pub eqm1_slack: Option<f64>,
    /// Right minus left side of
    /// `(m-1) f^{-1/(m-1)} Δf^{1/(m-1)} ≤ m(m+Δφ)/(2C0) + S - (m+Δφ) Σg'^{iī}/(C0 λ)`
    /// at `p` with `S = 0`.
    pub chain_slack: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
}

/// Norms, the `H` profile and the inequalities at its maximum.
///
/// `gprime` is `g' = I + φ_{ij̄}` and `f` satisfies `det g' = f` (for the torus
/// that is `e^c f`).
pub fn estimate_report(
    phi: &ScalarField,
    gprime: &HermitianField,
    f: &ScalarField,
    cfg: &TestFunctionConfig,
) -> Result<(EstimateReport, HProfile)> {
    let d = phi.domain().clone();
    let nm = norms(phi)?;
    let prof = profile_h(phi, gprime, cfg)?;
    let m = d.m();
    let slot = d.interior_slot(prof.p).expect("p is interior");
    let gp = gprime.at(slot);
    let (eqm1_lhs, eqm1_rhs, chain_slack) = if m >= 2 {
        let w = gp.inverse().expect("positive definite at p");
        let lhs = w.trace();
        let fp = f.get(prof.p);
        let rhs = (gp.trace() / fp).powf(lift_exponent(m));
        let chain = chain_at(f, slot, prof.m_plus_lap_p, lhs, prof.lambda, cfg).ok();
        (Some(lhs), Some(rhs), chain)
    } else {
        (None, None, None)
    };
    let report = EstimateReport {
        m,
        osc: nm.osc,
        sup_grad: nm.sup_grad,
        sup_lap: nm.sup_lap,
        min_m_plus_lap: nm.min_m_plus_lap,
        lambda: prof.lambda,
        shift: prof.shift,
        h_max_node: Some(prof.p),
        h_max: Some(prof.h_max),
        m_plus_lap_at_p: Some(prof.m_plus_lap_p),
        grad_eq_residual: Some(prof.grad_eq_residual),
        max_principle: prof.max_principle,
        max_principle_tau: Some(prof.max_principle_tau),
        eqm1_lhs,
        eqm1_rhs,
        eqm1_slack: eqm1_lhs.zip(eqm1_rhs).map(|(l, r)| l - r),
        chain_slack,
        c1: None,
        c2: None,
        c3: None,
    };
    Ok((report, prof))
}

fn chain_at(f: &ScalarField, slot: usize, mpl: f64, inv_trace: f64, lambda: f64, cfg: &TestFunctionConfig) -> Result<f64> {
    let d = f.domain();
    let m = d.m();
    let p = lift_exponent(m);
    let node = d.interior()[slot];
    let fp = f.clone().with_boundary(Boundary::Nodal).map(|v| v.powf(p));
    let d2 = second_differences(&fp, slot)?;
    let lap = 0.25 * d2[..d.axes()].iter().sum::<f64>();
    let mf = m as f64;
    let lhs = (mf - 1.0) * f.get(node).powf(-p) * lap;
    let rhs = mf * mpl / (2.0 * cfg.c0) - mpl * inv_trace / (cfg.c0 * lambda);
    Ok(rhs - lhs)
}

/// Smallest node-wise slack of `Σ g'^{iī} ≥ ((m + Δφ)/f)^{1/(m-1)}`, with
/// `m + Δφ = tr g'`. Needs `m ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eqm1Audit {
    pub min_slack: f64,
    pub node: usize,
    pub nodes: usize,
}

pub fn eqm1_audit(gprime: &HermitianField, f: &ScalarField) -> Result<Eqm1Audit> {
    let d = gprime.domain();
    let m = d.m();
    if m < 2 {
        return Err(Error::Domain("the inequality has exponent 1/(m-1) and needs m >= 2".into()));
    }
    let p = lift_exponent(m);
    let mut slacks = Vec::with_capacity(d.num_interior());
    for (k, a) in gprime.mats().iter().enumerate() {
        let node = d.interior()[k];
        let w = a.inverse().ok_or(Error::Admissibility { node, value: a.trace() - m as f64 })?;
        let fv = f.get(node);
        if !(fv > 0.0) {
            return Err(Error::InvalidDensity { node, value: fv });
        }
        slacks.push(w.trace() - (a.trace() / fv).powf(p));
    }
    let (k, min_slack) = par::argmin(&slacks).expect("non-empty interior");
    Ok(Eqm1Audit { min_slack, node: d.interior()[k], nodes: slacks.len() })
}

/// `(x, y)` pair of the closing inequality `y = x^{1+1/(m-1)} ≤ C1 x + C2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub x: f64,
    pub y: f64,
    pub eqm1_lhs: f64,
    pub eqm1_rhs: f64,
    pub eqm1_slack: f64,
    pub eqm1_ok: bool,
    pub chain_slack: Option<f64>,
    /// `λ (m/2) sup f^{1/(m-1)}`, the leading term of the closing constant.
    pub c1_leading: f64,
}

pub fn final_bound_audit(
    report: &EstimateReport,
    cond: &crate::rhs::ConditionReport,
    cfg: &TestFunctionConfig,
) -> Result<AuditRecord> {
    let m = cfg.m;
    if m < 2 {
        return Err(Error::Domain("the closing inequality has exponent 1/(m-1) and needs m >= 2".into()));
    }
    let missing = |what: &str| Error::IncompleteReport(format!("no {what}"));
    report.h_max_node.ok_or_else(|| missing("H-max node"))?;
    let x = report.m_plus_lap_at_p.ok_or_else(|| missing("m + Δφ at p"))?;
    let lhs = report.eqm1_lhs.ok_or_else(|| missing("eq (m-1) left side"))?;
    let rhs = report.eqm1_rhs.ok_or_else(|| missing("eq (m-1) right side"))?;
    let p = lift_exponent(m);
    Ok(AuditRecord {
        x,
        y: x.powf(1.0 + p),
        eqm1_lhs: lhs,
        eqm1_rhs: rhs,
        eqm1_slack: lhs - rhs,
        eqm1_ok: lhs - rhs >= -1e-8,
        chain_slack: report.chain_slack,
        c1_leading: report.lambda * m as f64 / 2.0 * cond.sup_f.powf(p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosingFit {
    pub c1: f64,
    /// Smallest intercept putting every point under the line `C1 x + C2`.
    pub c2: f64,
    /// Largest root of `x^{1+1/(m-1)} = C1 x + C2`.
    pub c3: f64,
    pub c2_least_squares: f64,
    pub all_satisfied: bool,
}

/// Fits `y ≤ C1 x + C2` to audit records by least squares, lifts `C2` to an
/// envelope and solves for the implied bound `C3` on `x`.
pub fn fit_closing(records: &[AuditRecord], m: usize) -> Result<ClosingFit> {
    if m < 2 {
        return Err(Error::Domain("the closing inequality needs m >= 2".into()));
    }
    if records.is_empty() {
        return Err(Error::IncompleteReport("no audit records to fit".into()));
    }
    let n = records.len() as f64;
    let mx = records.iter().map(|r| r.x).sum::<f64>() / n;
    let my = records.iter().map(|r| r.y).sum::<f64>() / n;
    let sxx: f64 = records.iter().map(|r| (r.x - mx).powi(2)).sum();
    let sxy: f64 = records.iter().map(|r| (r.x - mx) * (r.y - my)).sum();
    let c1 = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
    let c2_ls = my - c1 * mx;
    let c2 = records.iter().map(|r| r.y - c1 * r.x).fold(f64::NEG_INFINITY, f64::max);
    let q = 1.0 + lift_exponent(m);
    let g = |x: f64| x.powf(q) - c1 * x - c2;
    let mut lo = records.iter().map(|r| r.x).fold(0.0, f64::max);
    let mut hi = lo.max(1.0);
    while g(hi) <= 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let all_satisfied = records.iter().all(|r| r.y <= c1 * r.x + c2 + 1e-12 * r.y.abs());
    Ok(ClosingFit { c1, c2, c3: hi, c2_least_squares: c2_ls, all_satisfied })
}

/// Worst slack of the third-order bound over directions `k` at `p`, with the
/// data rotated into a frame where `g'(p)` is diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThirdOrderAtPoint {
    pub checks: Vec<LemmaCheck>,
    /// `min_k (rhs - lhs)`.
    pub worst_slack: f64,
}

pub fn third_order_at(
    phi: &ScalarField,
    gprime: &HermitianField,
    prof: &HProfile,
    cfg: &TestFunctionConfig,
) -> Result<ThirdOrderAtPoint> {
    let d = phi.domain().clone();
    let m = d.m();
    if m < 2 {
        return Err(Error::Domain("the third-order bound needs m >= 2".into()));
    }
    let p = prof.p;
    let slot = d.interior_slot(p).expect("p is interior");
    let entry = |a: usize, b: usize, imag: bool| {
        let gp = gprime;
        let dd = &d;
        move |j: usize| {
            let v = gp.at(dd.interior_slot(j).expect("interior")).get(a, b);
            if imag {
                v.im
            } else {
                v.re
            }
        }
    };
    // t[a][b][l] = ∂_l g'_{a b̄}
    let mut t = [[[Complex64::new(0.0, 0.0); 2]; 2]; 2];
    for a in 0..m {
        for b in 0..m {
            for l in 0..m {
                let re = complex_derivative(&d, p, l, entry(a, b, false));
                let im = complex_derivative(&d, p, l, entry(a, b, true));
                let (re, im) = re.zip(im).ok_or_else(|| Error::Domain("isolated interior node".into()))?;
                t[a][b][l] = re + Complex64::new(0.0, 1.0) * im;
            }
        }
    }
    let g = gradient_at(phi, slot)?;
    let grad = complex_gradient(m, &g);
    let (lam, u) = gprime.at(slot).eigh();
    let mut checks = Vec::with_capacity(m);
    for k in 0..m {
        let mut third = vec![vec![Complex64::new(0.0, 0.0); m]; m];
        for (i, row) in third.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let mut s = Complex64::new(0.0, 0.0);
                for a in 0..m {
                    for b in 0..m {
                        for l in 0..m {
                            s += u[a][i].conj() * t[a][b][l] * u[b][j] * u[l][k];
                        }
                    }
                }
                *v = s;
            }
        }
        let grad_rot: Vec<Complex64> =
            (0..m).map(|kk| (0..m).map(|l| u[l][kk] * grad[l]).sum()).collect();
        let input = ThirdOrderInput {
            g_diag: lam[..m].to_vec(),
            third,
            grad: grad_rot,
            lap: prof.m_plus_lap_p - m as f64,
            alpha_prime: cfg.alpha1(prof.phi_p),
        };
        checks.push(lemma_third_order_bound(&input, 0.0)?);
    }
    let worst_slack = checks.iter().map(LemmaCheck::slack).fold(f64::INFINITY, f64::min);
    Ok(ThirdOrderAtPoint { checks, worst_slack })
}

/// Residual of `g'^{ij̄} φ_{ij̄k} = ∂_k f / f` on a flat m = 2 solve.
#[derive(Debug, Clone)]
pub struct M2Identity {
    /// `max_k |tr(U^{-1} ∂_k U) - ∂_k f / f|` at interior nodes (`U = u_{ij̄}`).
    pub residual: ScalarField,
    /// `max_k |tr(U^{-1} ∂_k U) - ∂_k log det U|`: the part that is pure
    /// discretization of the chain rule.
    pub discretization: ScalarField,
    /// Interior nodes at least two spacings inside the boundary.
    pub core: Vec<usize>,
}

impl M2Identity {
    /// Largest residual and discretization term over the core nodes.
    pub fn core_max(&self) -> (f64, f64) {
        let r = self.core.iter().map(|&i| self.residual.get(i)).fold(0.0, f64::max);
        let dd = self.core.iter().map(|&i| self.discretization.get(i)).fold(0.0, f64::max);
        (r, dd)
    }
}

pub fn lemma_m2_identity(u: &ScalarField, f: &ScalarField) -> Result<M2Identity> {
    let d = u.domain().clone();
    if d.m() != 2 {
        return Err(Error::Domain("the identity is stated for m = 2".into()));
    }
    for &node in d.interior() {
        let v = f.get(node);
        if !(v > 0.0) {
            return Err(Error::InvalidDensity { node, value: v });
        }
    }
    let hess = complex_hessian(u)?;
    let log_det: Vec<f64> = hess.mats().iter().map(|a| a.det().ln()).collect();
    let per: Vec<(f64, f64)> = par::try_map_range(d.num_interior(), |slot| -> Result<(f64, f64)> {
        let node = d.interior()[slot];
        let w = hess.at(slot).inverse().ok_or(Error::Admissibility { node, value: 0.0 })?;
        let mut res: f64 = 0.0;
        let mut disc: f64 = 0.0;
        for k in 0..2 {
            let mut contraction = Complex64::new(0.0, 0.0);
            for a in 0..2 {
                for b in 0..2 {
                    let re = complex_derivative(&d, node, k, |j| hess.at(d.interior_slot(j).unwrap()).get(a, b).re);
                    let im = complex_derivative(&d, node, k, |j| hess.at(d.interior_slot(j).unwrap()).get(a, b).im);
                    let (re, im) = re.zip(im).ok_or_else(|| Error::Domain("isolated interior node".into()))?;
                    // g'^{b ā} ∂_k g'_{a b̄} = Σ W[b][a] T[a][b]
                    contraction += w.get(b, a) * (re + Complex64::new(0.0, 1.0) * im);
                }
            }
            // ∂f/f is discretized as ∂ log f, so the residual differs from the
            // discretization term only through the solver residual.
            let dlogf = complex_derivative(&d, node, k, |j| f.get(j).ln()).unwrap();
            let dlog = complex_derivative(&d, node, k, |j| log_det[d.interior_slot(j).unwrap()]).unwrap();
            res = res.max((contraction - dlogf).norm());
            disc = disc.max((contraction - dlog).norm());
        }
        Ok((res, disc))
    })?;
    let r: Vec<f64> = per.iter().map(|x| x.0).collect();
    let dd: Vec<f64> = per.iter().map(|x| x.1).collect();
    Ok(M2Identity {
        residual: ScalarField::from_interior(d.clone(), &r, Boundary::Nodal)?,
        discretization: ScalarField::from_interior(d.clone(), &dd, Boundary::Nodal)?,
        core: d.core_nodes(2),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;

    #[test]
    fn c0_and_alpha_identity() {
        assert_eq!(c0(2), 17.0);
        assert_eq!(c0(3), 19.0);
        let cfg = TestFunctionConfig::new(2);
        for x in [2.0, 3.5, 10.0] {
            assert!((cfg.alpha2(x) + cfg.c0 * cfg.alpha1(x).powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_potential() {
        let d = Arc::new(GridDomain::torus(2, 6, 1.0).unwrap());
        let phi = ScalarField::constant(d.clone(), 2.0);
        let n = norms(&phi).unwrap();
        assert_eq!((n.osc, n.sup_grad, n.sup_lap, n.min_m_plus_lap), (0.0, 0.0, 0.0, 2.0));
        let g = HermitianField::constant(d.clone(), HMat::identity(2)).unwrap();
        let prof = profile_h(&phi, &g, &TestFunctionConfig::new(2)).unwrap();
        assert_eq!(prof.p, 0);
        assert_eq!(prof.grad_eq_residual, 0.0);
        let want = 2.0 * (-(2.0f64).ln() / 17.0).exp();
        assert!(prof.h.values().iter().all(|&v| (v - want).abs() < 1e-15));
    }

    #[test]
    fn closing_fit_envelope() {
        let recs: Vec<AuditRecord> = [1.5, 2.0, 3.0]
            .iter()
            .map(|&x| AuditRecord {
                x,
                y: x * x,
                eqm1_lhs: 1.0,
                eqm1_rhs: 1.0,
                eqm1_slack: 0.0,
                eqm1_ok: true,
                chain_slack: None,
                c1_leading: 0.0,
            })
            .collect();
        let fit = fit_closing(&recs, 2).unwrap();
        assert!(fit.all_satisfied);
        assert!(fit.c3 >= 3.0);
        assert!((fit.c3 * fit.c3 - fit.c1 * fit.c3 - fit.c2).abs() < 1e-9);
    }
}
