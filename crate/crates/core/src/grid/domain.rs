use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::stencil::StencilSet;
use crate::error::{Error, Result};

/// Largest number of real axes supported (m <= 2).
pub const MAX_AXES: usize = 4;

/// Real coordinates of a node, padded with zeros past `2m`.
pub type Point = [f64; MAX_AXES];

/// Integer lattice offset, padded with zeros past `2m`.
pub type Offset = [i64; MAX_AXES];

/// Nodes closer to the sphere than this fraction of `h` are treated as lying on it.
const SPHERE_SNAP: f64 = 1e-9;

/// How far past the sphere (in units of `h`) the boundary band extends.
/// Covers every diagonal neighbour of an interior node.
const BAND_WIDTH: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Ball { center: Point, radius: f64 },
    Box { center: Point, half_width: f64 },
    Torus { period: f64 },
}

impl Shape {
    pub fn name(&self) -> &'static str {
        match self {
            Shape::Ball { .. } => "ball",
            Shape::Box { .. } => "box",
            Shape::Torus { .. } => "torus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeClass {
    Interior,
    BoundaryBand,
    Exterior,
}

/// Uniform grid over the bounding cube of a ball, a box or a periodic cell
/// in C^m = R^{2m}. Axis `2j` carries `x_{j+1}`, axis `2j+1` carries `y_{j+1}`;
/// axis 0 varies fastest in the node numbering.
#[derive(Debug)]
pub struct GridDomain {
    m: usize,
    n: usize,
    h: f64,
    shape: Shape,
    lower: Point,
    strides: [usize; MAX_AXES],
    num_nodes: usize,
    classes: Vec<NodeClass>,
    interior: Vec<usize>,
    slot: Vec<u32>,
    cut_stencils: OnceLock<StencilSet>,
    nodal_stencils: OnceLock<StencilSet>,
}

impl GridDomain {
    /// Ball of the given radius centred at the origin.
    pub fn ball(m: usize, n: usize, radius: f64) -> Result<Self> {
        Self::new(m, n, Shape::Ball { center: [0.0; MAX_AXES], radius })
    }

    /// Cube `[-half_width, half_width]^{2m}`.
    pub fn cube(m: usize, n: usize, half_width: f64) -> Result<Self> {
        Self::new(m, n, Shape::Box { center: [0.0; MAX_AXES], half_width })
    }

    /// Flat torus `R^{2m} / (period Z)^{2m}` with `n` nodes per axis.
    pub fn torus(m: usize, n: usize, period: f64) -> Result<Self> {
        Self::new(m, n, Shape::Torus { period })
    }

    pub fn new(m: usize, n: usize, shape: Shape) -> Result<Self> {
        if !(1..=2).contains(&m) {
            return Err(Error::InvalidDomain(format!("complex dimension {m} not in 1..=2")));
        }
        if n < 5 {
            return Err(Error::InvalidDomain(format!("{n} nodes per axis, need at least 5")));
        }
        let axes = 2 * m;
        let (lower, h) = match &shape {
            Shape::Ball { center, radius } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidDomain(format!("ball radius {radius}")));
                }
                let mut lower = [0.0; MAX_AXES];
                for a in 0..axes {
                    lower[a] = center[a] - radius;
                }
                (lower, 2.0 * radius / (n - 1) as f64)
            }
            Shape::Box { center, half_width } => {
                if !(*half_width > 0.0 && half_width.is_finite()) {
                    return Err(Error::InvalidDomain(format!("box half width {half_width}")));
                }
                let mut lower = [0.0; MAX_AXES];
                for a in 0..axes {
                    lower[a] = center[a] - half_width;
                }
                (lower, 2.0 * half_width / (n - 1) as f64)
            }
            Shape::Torus { period } => {
                if !(*period > 0.0 && period.is_finite()) {
                    return Err(Error::InvalidDomain(format!("torus period {period}")));
                }
                ([0.0; MAX_AXES], period / n as f64)
            }
        };
        let mut strides = [0usize; MAX_AXES];
        let mut s = 1usize;
        for stride in strides.iter_mut().take(axes) {
            *stride = s;
            s *= n;
        }
        let num_nodes = s;

        let mut domain = GridDomain {
            m,
            n,
            h,
            shape,
            lower,
            strides,
            num_nodes,
            classes: Vec::new(),
            interior: Vec::new(),
            slot: Vec::new(),
            cut_stencils: OnceLock::new(),
            nodal_stencils: OnceLock::new(),
        };
        let classes: Vec<NodeClass> = (0..num_nodes).map(|i| domain.classify(i)).collect();
        let mut slot = vec![u32::MAX; num_nodes];
        let mut interior = Vec::new();
        for (i, c) in classes.iter().enumerate() {
            if *c == NodeClass::Interior {
                slot[i] = interior.len() as u32;
                interior.push(i);
            }
        }
        if interior.is_empty() {
            return Err(Error::InvalidDomain("no interior nodes".into()));
        }
        domain.classes = classes;
        domain.interior = interior;
        domain.slot = slot;
        Ok(domain)
    }

    fn classify(&self, node: usize) -> NodeClass {
        let idx = self.multi_index(node);
        match &self.shape {
            Shape::Torus { .. } => NodeClass::Interior,
            Shape::Box { .. } => {
                let on_face = idx[..self.axes()]
                    .iter()
                    .any(|&i| i == 0 || i == self.n as i64 - 1);
                if on_face {
                    NodeClass::BoundaryBand
                } else {
                    NodeClass::Interior
                }
            }
            Shape::Ball { radius, .. } => {
                let d = self.dist_to_center(node);
                if d < radius - SPHERE_SNAP * self.h {
                    NodeClass::Interior
                } else if d < radius + BAND_WIDTH * self.h {
                    NodeClass::BoundaryBand
                } else {
                    NodeClass::Exterior
                }
            }
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of real axes, `2m`.
    pub fn axes(&self) -> usize {
        2 * self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.shape, Shape::Torus { .. })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn class(&self, node: usize) -> NodeClass {
        self.classes[node]
    }

    /// Interior node ids in increasing (lexicographic) order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    /// Position of `node` in [`Self::interior`], if interior.
    pub fn interior_slot(&self, node: usize) -> Option<usize> {
        match self.slot[node] {
            u32::MAX => None,
            s => Some(s as usize),
        }
    }

    /// Node-id contribution of coordinate `i` along `axis` (wrapped on the
    /// torus, clamped to the grid otherwise).
    pub fn axis_term(&self, axis: usize, i: i64) -> usize {
        let n = self.n as i64;
        let i = if self.is_periodic() { i.rem_euclid(n) } else { i.clamp(0, n - 1) };
        i as usize * self.strides[axis]
    }

    pub fn multi_index(&self, node: usize) -> Offset {
        let mut idx = [0i64; MAX_AXES];
        for a in 0..self.axes() {
            idx[a] = ((node / self.strides[a]) % self.n) as i64;
        }
        idx
    }

    /// Node id for a multi-index; wraps on the torus, `None` outside the grid otherwise.
    pub fn node_at(&self, idx: &Offset) -> Option<usize> {
        let n = self.n as i64;
        let mut node = 0usize;
        for a in 0..self.axes() {
            let mut i = idx[a];
            if self.is_periodic() {
                i = i.rem_euclid(n);
            } else if i < 0 || i >= n {
                return None;
            }
            node += i as usize * self.strides[a];
        }
        Some(node)
    }

    pub fn neighbor(&self, node: usize, offset: &Offset) -> Option<usize> {
        let mut idx = self.multi_index(node);
        for a in 0..self.axes() {
            idx[a] += offset[a];
        }
        self.node_at(&idx)
    }

    /// Neighbour with index clamping instead of `None` (constant continuation past the grid).
    pub fn neighbor_clamped(&self, node: usize, offset: &Offset) -> usize {
        let mut idx = self.multi_index(node);
        let n = self.n as i64;
        for a in 0..self.axes() {
            idx[a] += offset[a];
            if !self.is_periodic() {
                idx[a] = idx[a].clamp(0, n - 1);
            }
        }
        self.node_at(&idx).expect("clamped index lies on the grid")
    }

    pub fn coords(&self, node: usize) -> Point {
        let idx = self.multi_index(node);
        let mut p = [0.0; MAX_AXES];
        for a in 0..self.axes() {
            p[a] = self.lower[a] + idx[a] as f64 * self.h;
        }
        p
    }

    /// Complex coordinates `z_j = x_j + i y_j`.
    pub fn z(&self, node: usize) -> [Complex64; 2] {
        let p = self.coords(node);
        [Complex64::new(p[0], p[1]), Complex64::new(p[2], p[3])]
    }

    /// `|z|^2` measured from the coordinate origin.
    pub fn abs2(&self, node: usize) -> f64 {
        let p = self.coords(node);
        p.iter().map(|x| x * x).sum()
    }

    /// Centre of a ball or box; the origin of the periodic cell otherwise.
    pub fn center(&self) -> Point {
        match &self.shape {
            Shape::Ball { center, .. } | Shape::Box { center, .. } => *center,
            Shape::Torus { .. } => [0.0; MAX_AXES],
        }
    }

    pub fn dist_to_center(&self, node: usize) -> f64 {
        let p = self.coords(node);
        let c = self.center();
        (0..self.axes()).map(|a| (p[a] - c[a]).powi(2)).sum::<f64>().sqrt()
    }

    /// Radius of the ball, or of the ball circumscribing the box.
    pub fn enclosing_radius(&self) -> Option<f64> {
        match &self.shape {
            Shape::Ball { radius, .. } => Some(*radius),
            Shape::Box { half_width, .. } => Some(half_width * (self.axes() as f64).sqrt()),
            Shape::Torus { .. } => None,
        }
    }

    /// Projection of a point onto the boundary along the ray from the centre
    /// (ball) or by clamping to the faces (box). The torus has no boundary.
    pub fn project_to_boundary(&self, p: &Point) -> Point {
        match &self.shape {
            Shape::Ball { center, radius } => {
                let mut d = [0.0; MAX_AXES];
                let mut len = 0.0;
                for a in 0..self.axes() {
                    d[a] = p[a] - center[a];
                    len += d[a] * d[a];
                }
                let len = len.sqrt();
                let mut q = *center;
                if len == 0.0 {
                    q[0] += radius;
                    return q;
                }
                for a in 0..self.axes() {
                    q[a] = center[a] + d[a] * radius / len;
                }
                q
            }
            Shape::Box { center, half_width } => {
                let mut q = *p;
                for a in 0..self.axes() {
                    q[a] = q[a].clamp(center[a] - half_width, center[a] + half_width);
                }
                q
            }
            Shape::Torus { .. } => *p,
        }
    }

    /// Interior nodes at least `margin` grid spacings inside the boundary band.
    pub fn core_nodes(&self, margin: usize) -> Vec<usize> {
        let n = self.n as i64;
        let k = margin as i64;
        match &self.shape {
            Shape::Torus { .. } => self.interior.clone(),
            Shape::Box { .. } => self
                .interior
                .iter()
                .copied()
                .filter(|&i| {
                    let idx = self.multi_index(i);
                    idx[..self.axes()].iter().all(|&j| j >= k && j <= n - 1 - k)
                })
                .collect(),
            Shape::Ball { radius, .. } => self
                .interior
                .iter()
                .copied()
                .filter(|&i| self.dist_to_center(i) <= radius - margin as f64 * self.h)
                .collect(),
        }
    }

    /// Stencils whose arms stop at the boundary where they cross it.
    pub(crate) fn cut_stencils(&self) -> &StencilSet {
        self.cut_stencils.get_or_init(|| StencilSet::cut(self))
    }

    /// Plain central stencils reading neighbour values.
    pub(crate) fn nodal_stencils(&self) -> &StencilSet {
        self.nodal_stencils.get_or_init(|| StencilSet::nodal(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(GridDomain::ball(3, 9, 1.0).is_err());
        assert!(GridDomain::ball(1, 4, 1.0).is_err());
        assert!(GridDomain::ball(1, 9, 0.0).is_err());
        assert!(GridDomain::torus(1, 9, -1.0).is_err());
    }

    #[test]
    fn every_node_has_one_class() {
        let d = GridDomain::ball(2, 9, 1.0).unwrap();
        let mut counts = [0usize; 3];
        for i in 0..d.num_nodes() {
            match d.class(i) {
                NodeClass::Interior => counts[0] += 1,
                NodeClass::BoundaryBand => counts[1] += 1,
                NodeClass::Exterior => counts[2] += 1,
            }
        }
        assert_eq!(counts.iter().sum::<usize>(), d.num_nodes());
        assert_eq!(counts[0], d.num_interior());
        for &i in d.interior() {
            assert!(d.dist_to_center(i) < 1.0);
        }
    }

    #[test]
    fn torus_has_only_interior_nodes() {
        let d = GridDomain::torus(2, 6, 1.0).unwrap();
        assert_eq!(d.num_interior(), d.num_nodes());
        assert!((d.h() - 1.0 / 6.0).abs() < 1e-15);
        let far = d.neighbor(0, &[-1, 0, 0, 0]).unwrap();
        assert_eq!(d.multi_index(far)[0], 5);
    }

    #[test]
    fn diagonal_neighbours_of_interior_nodes_are_never_exterior() {
        let d = GridDomain::ball(2, 9, 1.0).unwrap();
        for &i in d.interior() {
            for a in 0..4 {
                for b in 0..4 {
                    for s in [-1i64, 1] {
                        let mut o = [0i64; 4];
                        if a == b {
                            o[a] = s;
                        } else {
                            o[a] = 1;
                            o[b] = s;
                        }
                        let j = d.neighbor(i, &o).unwrap();
                        assert_ne!(d.class(j), NodeClass::Exterior);
                    }
                }
            }
        }
    }

    #[test]
    fn box_faces_form_the_band() {
        let d = GridDomain::cube(1, 5, 1.0).unwrap();
        assert_eq!(d.num_interior(), 9);
        assert_eq!(d.core_nodes(2).len(), 1);
    }
}
