//! Three-point difference stencils along lattice directions.
//!
//! Every second derivative in the crate is built from second differences
//! along the axial directions `e_a` and the diagonals `e_a +- e_b`. Mixed real
//! derivatives come from the diagonal pair,
//! `u_ab = (D2[e_a + e_b] - D2[e_a - e_b]) / 4`, which is the 4-point corner
//! stencil in the uniform case. Where an arm would leave a ball it stops at the
//! sphere (Shortley-Weller), so the stencils stay exact on quadratics.

use super::domain::{GridDomain, NodeClass, Offset, Shape, MAX_AXES};
use super::field::{Boundary, ScalarField};
use crate::error::{Error, Result};

/// Upper bound on the number of directions (`(2m)^2` for m = 2).
pub const MAX_DIRS: usize = MAX_AXES * MAX_AXES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Arm {
    /// Reads the value stored at a node.
    Node(usize),
    /// Stops on the boundary at a point with the given `|x|^2`.
    Cut { abs2: f64 },
    /// Leaves the grid; evaluating through it is an error.
    Missing,
}

/// Arms along `+d` and `-d` with their lengths as fractions of one lattice step.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DirStencil {
    pub plus: Arm,
    pub minus: Arm,
    pub tp: f64,
    pub tm: f64,
}

impl DirStencil {
    /// Weights `(plus, centre, minus)` of the second difference in step units.
    pub fn second_weights(&self) -> (f64, f64, f64) {
        let (tp, tm) = (self.tp, self.tm);
        let s = tp + tm;
        (2.0 / (tp * s), -2.0 / (tp * tm), 2.0 / (tm * s))
    }

    /// Weights `(plus, centre, minus)` of the first difference in step units.
    pub fn first_weights(&self) -> (f64, f64, f64) {
        let (tp, tm) = (self.tp, self.tm);
        let s = tp + tm;
        let wp = tm / (tp * s);
        let wm = -tp / (tm * s);
        (wp, -(wp + wm), wm)
    }
}

/// Lattice directions: the `2m` axes, then `e_a + e_b`, `e_a - e_b` for `a < b`.
pub fn directions(axes: usize) -> Vec<Offset> {
    let mut dirs = Vec::with_capacity(axes * axes);
    for a in 0..axes {
        let mut d = [0i64; MAX_AXES];
        d[a] = 1;
        dirs.push(d);
    }
    for a in 0..axes {
        for b in (a + 1)..axes {
            let mut plus = [0i64; MAX_AXES];
            plus[a] = 1;
            plus[b] = 1;
            let mut minus = plus;
            minus[b] = -1;
            dirs.push(plus);
            dirs.push(minus);
        }
    }
    dirs
}

/// Index of the `e_a + e_b` direction (`a < b`); `e_a - e_b` follows it.
pub fn pair_dir(axes: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < axes);
    let mut k = 0;
    for i in 0..a {
        k += axes - 1 - i;
    }
    k += b - a - 1;
    axes + 2 * k
}

#[derive(Debug)]
pub(crate) struct StencilSet {
    nd: usize,
    arms: Vec<DirStencil>,
}

impl StencilSet {
    pub fn nodal(domain: &GridDomain) -> Self {
        let dirs = directions(domain.axes());
        let nd = dirs.len();
        let mut arms = Vec::with_capacity(domain.num_interior() * nd);
        for &node in domain.interior() {
            for d in &dirs {
                let neg = negate(d);
                let plus = domain.neighbor(node, d).map_or(Arm::Missing, Arm::Node);
                let minus = domain.neighbor(node, &neg).map_or(Arm::Missing, Arm::Node);
                arms.push(DirStencil { plus, minus, tp: 1.0, tm: 1.0 });
            }
        }
        StencilSet { nd, arms }
    }

    pub fn cut(domain: &GridDomain) -> Self {
        let dirs = directions(domain.axes());
        let nd = dirs.len();
        let mut arms = Vec::with_capacity(domain.num_interior() * nd);
        for &node in domain.interior() {
            for d in &dirs {
                let (plus, tp) = cut_arm(domain, node, d);
                let (minus, tm) = cut_arm(domain, node, &negate(d));
                arms.push(DirStencil { plus, minus, tp, tm });
            }
        }
        StencilSet { nd, arms }
    }

    pub fn at(&self, slot: usize) -> &[DirStencil] {
        &self.arms[slot * self.nd..(slot + 1) * self.nd]
    }
}

fn negate(d: &Offset) -> Offset {
    let mut o = *d;
    for x in o.iter_mut() {
        *x = -*x;
    }
    o
}

fn cut_arm(domain: &GridDomain, node: usize, d: &Offset) -> (Arm, f64) {
    let Some(nb) = domain.neighbor(node, d) else {
        return (Arm::Missing, 1.0);
    };
    match domain.class(nb) {
        NodeClass::Interior => (Arm::Node(nb), 1.0),
        _ => match domain.shape() {
            Shape::Ball { center, radius } => {
                let h = domain.h();
                let x = domain.coords(node);
                let (mut pq, mut qq, mut pp) = (0.0, 0.0, 0.0);
                for a in 0..domain.axes() {
                    let p = x[a] - center[a];
                    let q = h * d[a] as f64;
                    pq += p * q;
                    qq += q * q;
                    pp += p * p;
                }
                let disc = (pq * pq - qq * (pp - radius * radius)).max(0.0);
                let t = ((-pq + disc.sqrt()) / qq).clamp(f64::MIN_POSITIVE, 1.0);
                let mut abs2 = 0.0;
                for a in 0..domain.axes() {
                    let c = x[a] + t * h * d[a] as f64;
                    abs2 += c * c;
                }
                (Arm::Cut { abs2 }, t)
            }
            _ => {
                let c = domain.coords(nb);
                (Arm::Cut { abs2: c.iter().map(|v| v * v).sum() }, 1.0)
            }
        },
    }
}

/// Stencils matching the boundary mode of `field`.
pub(crate) fn stencils_for(field: &ScalarField) -> &StencilSet {
    match field.boundary() {
        Boundary::Nodal => field.domain().nodal_stencils(),
        Boundary::Dirichlet { .. } => field.domain().cut_stencils(),
    }
}

#[inline]
fn arm_value(field: &ScalarField, node: usize, arm: Arm) -> Result<f64> {
    match arm {
        Arm::Node(j) => {
            let v = field.values()[j];
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::BoundaryDataMissing { node, missing: j })
            }
        }
        Arm::Cut { abs2 } => match field.boundary() {
            Boundary::Dirichlet { value, quad } => Ok(value + quad * abs2),
            Boundary::Nodal => unreachable!("nodal stencils have no cut arms"),
        },
        Arm::Missing => Err(Error::BoundaryDataMissing { node, missing: usize::MAX }),
    }
}

/// Second differences along every direction at interior slot `slot`, divided by `h^2`.
/// Entry `d` approximates `d^T (real Hessian) d`.
pub(crate) fn second_differences(field: &ScalarField, slot: usize) -> Result<[f64; MAX_DIRS]> {
    let domain = field.domain();
    let node = domain.interior()[slot];
    let set = stencils_for(field);
    let u0 = field.values()[node];
    if !u0.is_finite() {
        return Err(Error::BoundaryDataMissing { node, missing: node });
    }
    let inv_h2 = 1.0 / (domain.h() * domain.h());
    let mut out = [0.0; MAX_DIRS];
    for (k, st) in set.at(slot).iter().enumerate() {
        let (wp, wc, wm) = st.second_weights();
        let up = arm_value(field, node, st.plus)?;
        let um = arm_value(field, node, st.minus)?;
        out[k] = (wp * up + wc * u0 + wm * um) * inv_h2;
    }
    Ok(out)
}

/// Real gradient at interior slot `slot` (first `2m` entries meaningful).
pub(crate) fn gradient_at(field: &ScalarField, slot: usize) -> Result<[f64; MAX_AXES]> {
    let domain = field.domain();
    let node = domain.interior()[slot];
    let set = stencils_for(field);
    let u0 = field.values()[node];
    let inv_h = 1.0 / domain.h();
    let mut g = [0.0; MAX_AXES];
    for (a, st) in set.at(slot).iter().take(domain.axes()).enumerate() {
        let (wp, wc, wm) = st.first_weights();
        let up = arm_value(field, node, st.plus)?;
        let um = arm_value(field, node, st.minus)?;
        g[a] = (wp * up + wc * u0 + wm * um) * inv_h;
    }
    Ok(g)
}

/// Real Hessian assembled from the directional second differences.
pub fn real_hessian(axes: usize, d2: &[f64; MAX_DIRS]) -> [[f64; MAX_AXES]; MAX_AXES] {
    let mut hess = [[0.0; MAX_AXES]; MAX_AXES];
    for a in 0..axes {
        hess[a][a] = d2[a];
        for b in (a + 1)..axes {
            let k = pair_dir(axes, a, b);
            let v = 0.25 * (d2[k] - d2[k + 1]);
            hess[a][b] = v;
            hess[b][a] = v;
        }
    }
    hess
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_dir_enumerates_in_order() {
        let dirs = directions(4);
        assert_eq!(dirs.len(), 16);
        for a in 0..4 {
            for b in (a + 1)..4 {
                let k = pair_dir(4, a, b);
                assert_eq!(dirs[k][a], 1);
                assert_eq!(dirs[k][b], 1);
                assert_eq!(dirs[k + 1][b], -1);
            }
        }
        assert_eq!(pair_dir(2, 0, 1), 2);
    }

    #[test]
    fn shortley_weller_weights_are_exact_on_quadratics() {
        let st = DirStencil { plus: Arm::Missing, minus: Arm::Missing, tp: 0.3, tm: 1.0 };
        let q = |t: f64| 2.0 + 3.0 * t - 1.5 * t * t;
        let (wp, wc, wm) = st.second_weights();
        let d2 = wp * q(0.3) + wc * q(0.0) + wm * q(-1.0);
        assert!((d2 + 3.0).abs() < 1e-12);
        let (wp, wc, wm) = st.first_weights();
        let d1 = wp * q(0.3) + wc * q(0.0) + wm * q(-1.0);
        assert!((d1 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cut_arms_land_on_the_sphere() {
        let d = GridDomain::ball(1, 9, 1.0).unwrap();
        let set = d.cut_stencils();
        let mut cuts = 0;
        for slot in 0..d.num_interior() {
            for st in set.at(slot) {
                for arm in [st.plus, st.minus] {
                    if let Arm::Cut { abs2 } = arm {
                        cuts += 1;
                        assert!((abs2 - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
        assert!(cuts > 0);
    }
}
