use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::domain::{GridDomain, NodeClass, Shape};
use crate::error::{Error, Result};
use crate::par;

/// How stencils treat arms that leave the interior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Boundary {
    /// Read whatever the field stores at the neighbouring node.
    Nodal,
    /// Stop at the boundary, where the field equals `value + quad * |x|^2`.
    Dirichlet { value: f64, quad: f64 },
}

impl Boundary {
    pub const ZERO: Boundary = Boundary::Dirichlet { value: 0.0, quad: 0.0 };

    pub fn value_at(&self, abs2: f64) -> Option<f64> {
        match *self {
            Boundary::Nodal => None,
            Boundary::Dirichlet { value, quad } => Some(value + quad * abs2),
        }
    }
}

/// One real value per grid node. Non-finite values mark "no data".
#[derive(Debug, Clone)]
pub struct ScalarField {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
    boundary: Boundary,
}

impl ScalarField {
    pub fn from_values(domain: Arc<GridDomain>, values: Vec<f64>, boundary: Boundary) -> Result<Self> {
        if values.len() != domain.num_nodes() {
            return Err(Error::FieldMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                domain.num_nodes()
            )));
        }
        if let Some(&node) = domain.interior().iter().find(|&&i| !values[i].is_finite()) {
            return Err(Error::FieldMismatch(format!("non-finite value at interior node {node}")));
        }
        Ok(ScalarField { domain, values, boundary })
    }

    pub fn constant(domain: Arc<GridDomain>, c: f64) -> Self {
        let values = vec![c; domain.num_nodes()];
        ScalarField { domain, values, boundary: Boundary::Nodal }
    }

    /// Samples `f` at every node of the grid.
    pub fn from_fn<F>(domain: Arc<GridDomain>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let axes = domain.axes();
        let values = par::map_range(domain.num_nodes(), |i| f(&domain.coords(i)[..axes]));
        ScalarField { domain, values, boundary: Boundary::Nodal }
    }

    /// Samples `f` inside the domain and continues it outside by its value at
    /// the nearest boundary point.
    pub fn from_fn_extended<F>(domain: Arc<GridDomain>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let axes = domain.axes();
        let values = par::map_range(domain.num_nodes(), |i| {
            let p = domain.coords(i);
            if domain.class(i) == NodeClass::Interior {
                f(&p[..axes])
            } else {
                f(&domain.project_to_boundary(&p)[..axes])
            }
        });
        ScalarField { domain, values, boundary: Boundary::Nodal }
    }

    /// Samples `f` at interior nodes; everything else carries the boundary data.
    pub fn dirichlet_from_fn<F>(domain: Arc<GridDomain>, boundary: Boundary, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let axes = domain.axes();
        let values = par::map_range(domain.num_nodes(), |i| {
            let p = domain.coords(i);
            if domain.class(i) == NodeClass::Interior {
                f(&p[..axes])
            } else {
                boundary_fill(&domain, boundary, i)
            }
        });
        ScalarField { domain, values, boundary }
    }

    /// Builds a field from values at the interior nodes (in [`GridDomain::interior`] order).
    pub fn from_interior(domain: Arc<GridDomain>, interior: &[f64], boundary: Boundary) -> Result<Self> {
        if interior.len() != domain.num_interior() {
            return Err(Error::FieldMismatch(format!(
                "{} interior values for {} interior nodes",
                interior.len(),
                domain.num_interior()
            )));
        }
        let mut values: Vec<f64> = (0..domain.num_nodes())
            .map(|i| boundary_fill(&domain, boundary, i))
            .collect();
        for (&node, &v) in domain.interior().iter().zip(interior) {
            values[node] = v;
        }
        Self::from_values(domain, values, boundary)
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn get(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.domain.interior().iter().map(|&i| self.values[i]).collect()
    }

    /// Applies `f` node-wise, keeping the boundary mode (and "no data" markers).
    pub fn map<F: Fn(f64) -> f64 + Sync + Send>(&self, f: F) -> ScalarField {
        let values = par::map_slice(&self.values, |&v| if v.is_finite() { f(v) } else { v });
        ScalarField { domain: self.domain.clone(), values, boundary: self.boundary }
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    /// Largest and smallest finite value over the interior.
    pub fn interior_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in self.domain.interior() {
            lo = lo.min(self.values[i]);
            hi = hi.max(self.values[i]);
        }
        (lo, hi)
    }

    /// Fills every non-finite non-interior node of a ball with the value of the
    /// interior node nearest to its radial projection (constant continuation).
    pub fn extend_radially(&self) -> ScalarField {
        let d = &self.domain;
        let Shape::Ball { center, radius } = d.shape() else {
            return self.clone();
        };
        let h = d.h();
        let axes = d.axes();
        let values = par::map_range(d.num_nodes(), |i| {
            let v = self.values[i];
            if v.is_finite() || d.class(i) == NodeClass::Interior {
                return v;
            }
            let p = d.coords(i);
            let dist = d.dist_to_center(i);
            // walk inward along the ray until an interior node is hit
            let mut r = radius - 0.5 * h;
            while r > -h {
                let mut q = [0i64; 4];
                for a in 0..axes {
                    let x = if dist > 0.0 { center[a] + (p[a] - center[a]) * r / dist } else { center[a] };
                    q[a] = ((x - (center[a] - radius)) / h).round() as i64;
                }
                if let Some(j) = d.node_at(&q) {
                    if d.class(j) == NodeClass::Interior && self.values[j].is_finite() {
                        return self.values[j];
                    }
                }
                r -= 0.5 * h;
            }
            v
        });
        ScalarField { domain: self.domain.clone(), values, boundary: self.boundary }
    }
}

fn boundary_fill(domain: &GridDomain, boundary: Boundary, node: usize) -> f64 {
    match boundary {
        Boundary::Nodal => f64::NAN,
        Boundary::Dirichlet { value, quad } => {
            let q = domain.project_to_boundary(&domain.coords(node));
            value + quad * q.iter().map(|x| x * x).sum::<f64>()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extension_is_constant_along_rays() {
        let d = Arc::new(GridDomain::ball(1, 17, 1.0).unwrap());
        let f = ScalarField::from_fn_extended(d.clone(), |x| x[0] * x[0] + x[1] * x[1]);
        for i in 0..d.num_nodes() {
            if d.class(i) != NodeClass::Interior {
                assert!((f.get(i) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn radial_extension_fills_missing_band_values() {
        let d = Arc::new(GridDomain::ball(1, 17, 1.0).unwrap());
        let inner = vec![2.0; d.num_interior()];
        let f = ScalarField::from_interior(d.clone(), &inner, Boundary::Nodal).unwrap();
        assert!(f.values().iter().any(|v| v.is_nan()));
        let g = f.extend_radially();
        assert!(g.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn from_values_rejects_wrong_length_and_nan() {
        let d = Arc::new(GridDomain::torus(1, 5, 1.0).unwrap());
        assert!(ScalarField::from_values(d.clone(), vec![0.0; 3], Boundary::Nodal).is_err());
        let mut v = vec![0.0; 25];
        v[3] = f64::NAN;
        assert!(ScalarField::from_values(d, v, Boundary::Nodal).is_err());
    }
}
