//! Density conditions and the ε-lift / mollification of degenerate densities.
//!
//! For `m ≥ 2` the exponents are `p = 1/(m-1)` (for `A`) and `q = 1/m` (for
//! `A1`). With `m = 1` the exponent `1/(m-1)` is meaningless and `p = 1` is
//! used instead, which makes the lift `h = f * γ + ε`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::stencil::{gradient_at, second_differences};
use crate::grid::{complex_laplacian, gradient, Boundary, NodeClass, Offset, ScalarField, MAX_AXES};
use crate::par;

/// The exponent `1/(m-1)`, or 1 when `m = 1`.
pub fn lift_exponent(m: usize) -> f64 {
    if m >= 2 {
        1.0 / (m - 1) as f64
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub m: usize,
    pub sup_f: f64,
    pub sup_f_node: usize,
    /// `max(0, -inf Δ f^{1/(m-1)})`.
    pub a: f64,
    pub a_node: usize,
    /// `sup |∇ f^{1/m}|` (Euclidean norm of the real gradient).
    pub a1: f64,
    pub a1_node: usize,
    pub nonnegative: bool,
    pub positive: bool,
    /// Nodes entering the extrema for `A` and `A1`.
    pub sampled_nodes: usize,
}

/// Computes `sup f`, `A` and `A1` for the density `f`.
///
/// `A` and `A1` are extremised over interior nodes at least two spacings
/// inside the boundary band, where every stencil arm reads real data.
pub fn check_conditions(f: &ScalarField, m: usize) -> Result<ConditionReport> {
    let d = f.domain().clone();
    if d.m() != m {
        return Err(Error::FieldMismatch(format!("density on an m = {} grid checked with m = {m}", d.m())));
    }
    for (node, &v) in f.values().iter().enumerate() {
        if v < 0.0 || (v.is_nan() && d.class(node) == NodeClass::Interior) {
            return Err(Error::InvalidDensity { node, value: v });
        }
    }
    let interior = f.interior_values();
    let (sup_slot, sup_f) = par::argmax(&interior).expect("non-empty interior");
    let nonnegative = true;
    let positive = interior.iter().all(|&v| v > 0.0);

    let p = lift_exponent(m);
    let q = 1.0 / m as f64;
    let nodal = f.clone().with_boundary(Boundary::Nodal);
    let fp = nodal.map(|v| v.powf(p));
    let fq = nodal.map(|v| v.powf(q));
    let core = d.core_nodes(2);
    if core.is_empty() {
        return Err(Error::InvalidDomain("no interior node lies two spacings inside the boundary".into()));
    }
    let axes = d.axes();
    let per: Vec<(f64, f64)> = par::try_map_range(core.len(), |k| -> Result<(f64, f64)> {
        let slot = d.interior_slot(core[k]).expect("core nodes are interior");
        let d2 = second_differences(&fp, slot)?;
        let lap = 0.25 * d2[..axes].iter().sum::<f64>();
        let g = gradient_at(&fq, slot)?;
        let norm = g[..axes].iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok((lap, norm))
    })?;
    let laps: Vec<f64> = per.iter().map(|x| x.0).collect();
    let grads: Vec<f64> = per.iter().map(|x| x.1).collect();
    let (a_k, lap_min) = par::argmin(&laps).unwrap();
    let (a1_k, a1) = par::argmax(&grads).unwrap();
    Ok(ConditionReport {
        m,
        sup_f,
        sup_f_node: d.interior()[sup_slot],
        a: (-lap_min).max(0.0),
        a_node: core[a_k],
        a1,
        a1_node: core[a1_k],
        nonnegative,
        positive,
        sampled_nodes: core.len(),
    })
}

/// Node-wise `Δf^{p} - p f^{p-2} [f Δf - ((m-2)/(m-1)) |∇f|^2]` with
/// `p = 1/(m-1)` and `|∇f|^2 = Σ_j |∂_j f|^2`, all with the grid stencils.
pub fn equivalence_identity_residual(f: &ScalarField, m: usize) -> Result<ScalarField> {
    let d = f.domain().clone();
    if m < 2 {
        return Err(Error::Domain("the identity involves 1/(m-1) and needs m >= 2".into()));
    }
    if d.m() != m {
        return Err(Error::FieldMismatch(format!("density on an m = {} grid checked with m = {m}", d.m())));
    }
    for &node in d.interior() {
        let v = f.get(node);
        if !(v > 0.0) {
            return Err(Error::Domain(format!("f = {v} at node {node}; the identity needs f > 0")));
        }
    }
    let p = lift_exponent(m);
    let fp = f.map(|v| v.powf(p));
    let lap_fp = complex_laplacian(&fp)?;
    let lap_f = complex_laplacian(f)?;
    let grads = gradient(f)?;
    let ratio = (m as f64 - 2.0) / (m as f64 - 1.0);
    let res: Vec<f64> = par::map_range(d.num_interior(), |k| {
        let node = d.interior()[k];
        let fv = f.get(node);
        let g2 = 0.25 * grads[k].iter().map(|v| v * v).sum::<f64>();
        let rhs = p * fv.powf(p - 2.0) * (fv * lap_f.get(node) - ratio * g2);
        lap_fp.get(node) - rhs
    });
    ScalarField::from_interior(d, &res, Boundary::Nodal)
}

/// ε and ρ axes of the continuation. `rho_over_h` holds ρ in grid spacings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationSchedule {
    pub eps: Vec<f64>,
    pub rho_over_h: Vec<f64>,
}

impl RegularizationSchedule {
    pub fn new(eps: Vec<f64>, rho_over_h: Vec<f64>) -> Result<Self> {
        let s = RegularizationSchedule { eps, rho_over_h };
        s.validate()?;
        Ok(s)
    }

    /// `count` terms `start, start*factor, ...`.
    pub fn geometric(start: f64, factor: f64, count: usize) -> Vec<f64> {
        (0..count).map(|k| start * factor.powi(k as i32)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, seq) in [("eps", &self.eps), ("rho", &self.rho_over_h)] {
            if seq.is_empty() {
                return Err(Error::InvalidSchedule(format!("{name} sequence is empty")));
            }
            if seq.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidSchedule(format!("{name} entries must be positive")));
            }
            if seq.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(Error::InvalidSchedule(format!("{name} sequence must strictly decrease")));
            }
        }
        if let Some(&r) = self.rho_over_h.last() {
            if r < 1.0 {
                return Err(Error::InvalidSchedule(format!("rho = {r}h is below one grid spacing")));
            }
        }
        Ok(())
    }

    /// `(ε, ρ/h)` pairs: ρ runs inside ε, both decreasing.
    pub fn stages(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.eps.len() * self.rho_over_h.len());
        for &e in &self.eps {
            for &r in &self.rho_over_h {
                out.push((e, r));
            }
        }
        out
    }
}

/// Discrete radial bump `γ(r) ∝ exp(-1/(1 - r^2))`, `r = |offset| h / ρ < 1`,
/// normalized to unit sum.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    pub offsets: Vec<Offset>,
    pub weights: Vec<f64>,
}

impl MollifierKernel {
    pub fn new(axes: usize, h: f64, rho: f64) -> Result<Self> {
        if !(rho >= h * (1.0 - 1e-12)) {
            return Err(Error::KernelUnderresolved { rho, h });
        }
        let reach = (rho / h).floor() as i64;
        let mut offsets = Vec::new();
        let mut raw = Vec::new();
        let side = 2 * reach + 1;
        let total = (side as usize).pow(axes as u32);
        for flat in 0..total {
            let mut o = [0i64; MAX_AXES];
            let mut rest = flat;
            for a in 0..axes {
                o[a] = (rest % side as usize) as i64 - reach;
                rest /= side as usize;
            }
            let r2 = o.iter().map(|&v| (v * v) as f64).sum::<f64>() * h * h / (rho * rho);
            if r2 < 1.0 {
                offsets.push(o);
                raw.push((-1.0 / (1.0 - r2)).exp());
            }
        }
        let total = par::pairwise_sum(&raw);
        let weights = raw.iter().map(|w| w / total).collect();
        Ok(MollifierKernel { offsets, weights })
    }

    /// `(g * γ)` at every node; reads outside the grid are clamped, the torus wraps.
    pub fn convolve(&self, g: &ScalarField) -> ScalarField {
        let d = g.domain();
        let vals = g.values();
        let axes = d.axes();
        let reach = self.offsets.iter().flat_map(|o| o.iter()).map(|v| v.abs()).max().unwrap_or(0);
        let side = (2 * reach + 1) as usize;
        let out = par::map_range(d.num_nodes(), |i| {
            // terms[a * side + (v + reach)] is the id contribution of idx[a] + v
            let idx = d.multi_index(i);
            let mut terms = vec![0usize; axes * side];
            for a in 0..axes {
                for (k, t) in terms[a * side..(a + 1) * side].iter_mut().enumerate() {
                    *t = d.axis_term(a, idx[a] + k as i64 - reach);
                }
            }
            let mut s = 0.0;
            for (o, w) in self.offsets.iter().zip(&self.weights) {
                let mut j = 0;
                for a in 0..axes {
                    j += terms[a * side + (o[a] + reach) as usize];
                }
                s += w * vals[j];
            }
            s
        });
        ScalarField::from_values(d.clone(), out, Boundary::Nodal).expect("same grid")
    }
}

/// Fills nodes without data: along the radial ray on a ball, otherwise left as is.
fn extended(f: &ScalarField) -> ScalarField {
    if f.values().iter().all(|v| v.is_finite()) {
        f.clone()
    } else {
        f.extend_radially()
    }
}

/// `h_{ε,ρ} = (ε + f^p * γ_ρ)^{m-1}` (`p = 1/(m-1)`), or `ε + f * γ_ρ` when m = 1.
///
/// Since the kernel has unit mass this is `((f^p + ε) * γ_ρ)^{m-1}`, and
/// `h ≥ ε^{m-1}` holds exactly.
pub fn mollify_lift(f: &ScalarField, eps: f64, rho: f64) -> Result<ScalarField> {
    let d = f.domain().clone();
    if !(eps > 0.0) {
        return Err(Error::InvalidSchedule(format!("epsilon {eps} must be positive")));
    }
    let kernel = MollifierKernel::new(d.axes(), d.h(), rho)?;
    let src = extended(f);
    if let Some((node, &v)) = src.values().iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::InvalidDensity { node, value: v });
    }
    let m = d.m();
    let p = lift_exponent(m);
    let g = src.map(|v| v.powf(p)).with_boundary(Boundary::Nodal);
    let smooth = kernel.convolve(&g);
    let out_pow = if m >= 2 { (m - 1) as i32 } else { 1 };
    Ok(smooth.map(|v| (eps + v).powi(out_pow)))
}

/// Lifts `f` for every stage of the schedule, in order.
pub fn lift_schedule(f: &ScalarField, sched: &RegularizationSchedule) -> Result<Vec<(f64, f64, ScalarField)>> {
    sched.validate()?;
    let h = f.domain().h();
    sched
        .stages()
        .into_iter()
        .map(|(e, r)| mollify_lift(f, e, r * h).map(|fld| (e, r, fld)))
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::grid::GridDomain;

    #[test]
    fn constant_density_has_trivial_constants() {
        for m in 1..=2 {
            let d = Arc::new(GridDomain::ball(m, 13, 1.0).unwrap());
            let r = check_conditions(&ScalarField::constant(d, 1.0), m).unwrap();
            assert_eq!((r.a, r.a1, r.sup_f), (0.0, 0.0, 1.0));
            assert!(r.positive);
        }
    }

    #[test]
    fn negative_density_is_rejected() {
        let d = Arc::new(GridDomain::ball(1, 9, 1.0).unwrap());
        let f = ScalarField::constant(d, -1.0);
        assert!(matches!(check_conditions(&f, 1), Err(Error::InvalidDensity { .. })));
    }

    #[test]
    fn kernel_is_normalized_and_delta_at_one_spacing() {
        let k = MollifierKernel::new(4, 0.1, 0.4).unwrap();
        assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(k.weights.iter().all(|&w| w >= 0.0));
        let delta = MollifierKernel::new(2, 0.1, 0.1).unwrap();
        assert_eq!(delta.weights, vec![1.0]);
        assert!(matches!(MollifierKernel::new(2, 0.1, 0.05), Err(Error::KernelUnderresolved { .. })));
    }

    #[test]
    fn lift_of_unit_density() {
        let d = Arc::new(GridDomain::ball(2, 9, 1.0).unwrap());
        let h = mollify_lift(&ScalarField::constant(d.clone(), 1.0), 0.1, 2.0 * d.h()).unwrap();
        assert!(h.values().iter().all(|&v| (v - 1.1).abs() < 1e-14));
    }

    #[test]
    fn schedule_validation() {
        assert!(RegularizationSchedule::new(vec![0.1, 0.01], vec![4.0, 2.0]).is_ok());
        assert!(RegularizationSchedule::new(vec![0.01, 0.1], vec![4.0, 2.0]).is_err());
        assert!(RegularizationSchedule::new(vec![0.1], vec![0.5]).is_err());
        let s = RegularizationSchedule::new(vec![0.1, 0.01], vec![4.0, 2.0]).unwrap();
        assert_eq!(s.stages(), vec![(0.1, 4.0), (0.1, 2.0), (0.01, 4.0), (0.01, 2.0)]);
    }
}
