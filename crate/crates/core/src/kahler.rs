//! Model Kähler metrics in a chart of C^m (m ≤ 2), their curvature
//! `R_{ij̄kl̄} = -∂_k∂_l̄ g_{ij̄} + g^{pq̄} ∂_k g_{iq̄} ∂_l̄ g_{pj̄}` and a
//! frame-sampling test of nonnegative orthogonal bisectional curvature.
//!
//! Positive model: Fubini-Study, `g_{ij̄} = ∂_i∂_j̄ log(1 + |z|^2)`, for which
//! `R = g⊗g + g⊗g` (second factor with `j`, `l` swapped). The Poincaré ball
//! `-log(1 - |z|^2)` has the same form with the opposite sign.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::HMat;

/// Values below this fail the orthogonal bisectional curvature test.
pub const OBC_THRESHOLD: f64 = -1e-9;

type Cx = Complex64;
type Frame = [[Cx; 2]; 2];

const ZERO: Cx = Cx::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetricModel {
    /// Euclidean metric on C^m or the flat torus.
    Flat { m: usize },
    FubiniStudy { m: usize },
    /// Negatively curved control on the unit ball.
    PoincareDisk { m: usize },
    /// `C × P^1`: flat in `z_1`, Fubini-Study in `z_2`.
    ProductFlatFs,
}

impl MetricModel {
    pub const NAMES: [&'static str; 5] = ["flat", "fubini-study-1", "fubini-study-2", "poincare-disk", "product-flat-fs"];

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "flat" => MetricModel::Flat { m: 2 },
            "fubini-study-1" => MetricModel::FubiniStudy { m: 1 },
            "fubini-study-2" => MetricModel::FubiniStudy { m: 2 },
            "poincare-disk" => MetricModel::PoincareDisk { m: 1 },
            "product-flat-fs" => MetricModel::ProductFlatFs,
            other => return Err(Error::Domain(format!("unknown metric `{other}`"))),
        })
    }

    pub fn name(&self) -> String {
        match self {
            MetricModel::Flat { .. } => "flat".into(),
            MetricModel::FubiniStudy { m } => format!("fubini-study-{m}"),
            MetricModel::PoincareDisk { .. } => "poincare-disk".into(),
            MetricModel::ProductFlatFs => "product-flat-fs".into(),
        }
    }

    pub fn m(&self) -> usize {
        match *self {
            MetricModel::Flat { m } | MetricModel::FubiniStudy { m } | MetricModel::PoincareDisk { m } => m,
            MetricModel::ProductFlatFs => 2,
        }
    }

    /// Whether the model is expected to have nonnegative orthogonal bisectional curvature.
    pub fn documented_obc(&self) -> bool {
        !matches!(self, MetricModel::PoincareDisk { .. })
    }

    /// Radius of the chart ball sample points are drawn from.
    pub fn sample_radius(&self) -> f64 {
        match self {
            MetricModel::PoincareDisk { .. } => 0.9,
            _ => 2.0,
        }
    }

    fn check_point(&self, z: &[Cx]) -> Result<()> {
        let chart = || Error::ChartDomain { metric: self.name() };
        if z.len() != self.m() || z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(chart());
        }
        if let MetricModel::PoincareDisk { .. } = self {
            if z.iter().map(|c| c.norm_sqr()).sum::<f64>() >= 1.0 {
                return Err(chart());
            }
        }
        Ok(())
    }

    /// Kähler potential, used by the finite-difference oracle.
    pub fn potential(&self, z: &[Cx]) -> f64 {
        let s: f64 = z.iter().map(|c| c.norm_sqr()).sum();
        match self {
            MetricModel::Flat { .. } => s,
            MetricModel::FubiniStudy { .. } => s.ln_1p(),
            MetricModel::PoincareDisk { .. } => -(-s).ln_1p(),
            MetricModel::ProductFlatFs => z[0].norm_sqr() + z[1].norm_sqr().ln_1p(),
        }
    }

    /// `g_{ij̄}(z)`.
    pub fn metric(&self, z: &[Cx]) -> Result<HMat> {
        self.check_point(z)?;
        let m = self.m();
        let s: f64 = z.iter().map(|c| c.norm_sqr()).sum();
        let mut g = HMat::zeros(m);
        match self {
            MetricModel::Flat { .. } => g = HMat::identity(m),
            MetricModel::FubiniStudy { .. } | MetricModel::PoincareDisk { .. } => {
                let sg = if matches!(self, MetricModel::FubiniStudy { .. }) { 1.0 } else { -1.0 };
                let q = 1.0 + sg * s;
                for i in 0..m {
                    for j in 0..m {
                        let d = if i == j { 1.0 / q } else { 0.0 };
                        g.set(i, j, Cx::new(d, 0.0) - sg * z[i].conj() * z[j] / (q * q));
                    }
                }
            }
            MetricModel::ProductFlatFs => {
                let q = 1.0 + z[1].norm_sqr();
                g.set(0, 0, Cx::new(1.0, 0.0));
                g.set(1, 1, Cx::new(1.0 / (q * q), 0.0));
            }
        }
        Ok(g)
    }

    /// `R_{ij̄kl̄}(z)` in coordinates.
    pub fn curvature_coords(&self, z: &[Cx]) -> Result<Tensor4> {
        let g = self.metric(z)?;
        let m = self.m();
        let mut r = Tensor4::zeros(m);
        match self {
            MetricModel::Flat { .. } => {}
            MetricModel::FubiniStudy { .. } | MetricModel::PoincareDisk { .. } => {
                let sg = if matches!(self, MetricModel::FubiniStudy { .. }) { 1.0 } else { -1.0 };
                for (i, j, k, l) in Tensor4::indices(m) {
                    r.set(i, j, k, l, sg * (g.get(i, j) * g.get(k, l) + g.get(i, l) * g.get(k, j)));
                }
            }
            MetricModel::ProductFlatFs => {
                let g22 = g.get(1, 1);
                r.set(1, 1, 1, 1, 2.0 * g22 * g22);
            }
        }
        Ok(r)
    }
}

/// A 4-index tensor `T_{ij̄kl̄}` for `m ≤ 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor4 {
    pub m: usize,
    /// Row-major in `(i, j, k, l)`.
    pub data: Vec<Cx>,
}

impl Tensor4 {
    pub fn zeros(m: usize) -> Self {
        Tensor4 { m, data: vec![ZERO; m.pow(4)] }
    }

    fn idx(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.m + j) * self.m + k) * self.m + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> Cx {
        self.data[self.idx(i, j, k, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: Cx) {
        let n = self.idx(i, j, k, l);
        self.data[n] = v;
    }

    pub fn indices(m: usize) -> impl Iterator<Item = (usize, usize, usize, usize)> {
        (0..m.pow(4)).map(move |n| (n / (m * m * m), n / (m * m) % m, n / m % m, n % m))
    }

    /// `R(e_a, ē_b, e_c, ē_d)` for the frame whose columns are `e_a`.
    pub fn in_frame(&self, e: &Frame) -> Tensor4 {
        let m = self.m;
        let mut out = Tensor4::zeros(m);
        for (a, b, c, d) in Tensor4::indices(m) {
            let mut s = ZERO;
            for (i, j, k, l) in Tensor4::indices(m) {
                let t = self.get(i, j, k, l);
                if t != ZERO {
                    s += t * e[i][a] * e[j][b].conj() * e[k][c] * e[l][d].conj();
                }
            }
            out.set(a, b, c, d, s);
        }
        out
    }

    /// `min_{i,j} Re R_{iījj̄}`, including `i = j`.
    pub fn bisectional_min(&self) -> f64 {
        let mut lo = f64::INFINITY;
        for i in 0..self.m {
            for j in 0..self.m {
                lo = lo.min(self.get(i, i, j, j).re);
            }
        }
        lo + 0.0
    }

    /// Largest violation of the Kähler and conjugate symmetries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, j, k, l) in Tensor4::indices(self.m) {
            let v = self.get(i, j, k, l);
            d = d.max((v - self.get(k, j, i, l)).norm());
            d = d.max((v - self.get(i, l, k, j)).norm());
            d = d.max((v.conj() - self.get(j, i, l, k)).norm());
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

fn inner(g: &HMat, v: &[Cx; 2], w: &[Cx; 2]) -> Cx {
    let mut s = ZERO;
    for i in 0..g.m() {
        for j in 0..g.m() {
            s += g.get(i, j) * v[i] * w[j].conj();
        }
    }
    s
}

fn column(e: &Frame, a: usize) -> [Cx; 2] {
    [e[0][a], e[1][a]]
}

/// Gram-Schmidt on the coordinate vectors with respect to `g`; columns are the frame.
pub fn orthonormal_frame(g: &HMat) -> Frame {
    let m = g.m();
    let mut e = [[ZERO; 2]; 2];
    for a in 0..m {
        let mut v = [ZERO; 2];
        v[a] = Cx::new(1.0, 0.0);
        for b in 0..a {
            let eb = column(&e, b);
            let p = inner(g, &v, &eb);
            for i in 0..m {
                v[i] -= p * eb[i];
            }
        }
        let n = inner(g, &v, &v).re.sqrt();
        for i in 0..m {
            e[i][a] = v[i] / n;
        }
    }
    e
}

fn compose(e: &Frame, u: &Frame, m: usize) -> Frame {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..m {
        for j in 0..m {
            out[i][j] = (0..m).map(|k| e[i][k] * u[k][j]).sum();
        }
    }
    out
}

/// Haar-distributed unitary: Gram-Schmidt QR of a complex Gaussian matrix.
fn haar_unitary(m: usize, rng: &mut ChaCha8Rng) -> Frame {
    let mut z = [[ZERO; 2]; 2];
    for row in z.iter_mut().take(m) {
        for c in row.iter_mut().take(m) {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *c = Cx::new(re, im);
        }
    }
    let id = HMat::identity(m);
    // Gram-Schmidt QR leaves the diagonal of R positive, which is what makes Q Haar.
    let mut q = [[ZERO; 2]; 2];
    for a in 0..m {
        let mut v = column(&z, a);
        for b in 0..a {
            let qb = column(&q, b);
            let p = inner(&id, &v, &qb);
            for i in 0..m {
                v[i] -= p * qb[i];
            }
        }
        let n = inner(&id, &v, &v).re.sqrt();
        for i in 0..m {
            q[i][a] = v[i] / n;
        }
    }
    q
}

/// Unitary rotations in each coordinate 2-plane, on a fixed grid of angles and phases.
fn plane_rotations(m: usize) -> Vec<Frame> {
    let mut out = Vec::new();
    if m < 2 {
        return out;
    }
    for k in 1..8 {
        let th = std::f64::consts::PI * k as f64 / 16.0;
        for ph in 0..4 {
            let w = Cx::from_polar(1.0, std::f64::consts::FRAC_PI_2 * ph as f64);
            let (c, s) = (th.cos(), th.sin());
            out.push([[Cx::new(c, 0.0), -s * w.conj()], [s * w, Cx::new(c, 0.0)]]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub point: Vec<Cx>,
    /// `R_{ij̄kl̄}` in the Gram-Schmidt orthonormal frame.
    pub tensor: Tensor4,
    /// `Σ_{i,k} R_{iīkk̄}` in that frame.
    pub s: f64,
    /// Minimum of `R_{iījj̄}` over the frames sampled by [`obc_check`]
    /// (the orthonormal frame alone for [`curvature_at`]).
    pub obc_min: f64,
    pub symmetry_defect: f64,
}

pub fn curvature_at(metric: &MetricModel, z: &[Cx]) -> Result<CurvatureSample> {
    let g = metric.metric(z)?;
    let r = metric.curvature_coords(z)?;
    let e = orthonormal_frame(&g);
    let t = r.in_frame(&e);
    let m = metric.m();
    let mut s = 0.0;
    for i in 0..m {
        for k in 0..m {
            s += t.get(i, i, k, k).re;
        }
    }
    Ok(CurvatureSample {
        point: z.to_vec(),
        s: s + 0.0,
        obc_min: t.bisectional_min(),
        symmetry_defect: r.symmetry_defect().max(t.symmetry_defect()),
        tensor: t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObcReport {
    pub metric: String,
    pub pass: bool,
    pub obc_min: f64,
    pub frames_per_point: usize,
    pub samples: Vec<CurvatureSample>,
}

fn point_rng(seed: u64, point: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(point as u64);
    rng
}

/// Deterministic sample points, uniform in the chart ball of [`MetricModel::sample_radius`].
pub fn sample_points(metric: &MetricModel, count: usize, seed: u64) -> Vec<Vec<Cx>> {
    let m = metric.m();
    let r = metric.sample_radius();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_9a11_c0de_0001);
    (0..count)
        .map(|_| loop {
            let p: Vec<Cx> = (0..m)
                .map(|_| Cx::new(rng.random_range(-r..r), rng.random_range(-r..r)))
                .collect();
            if p.iter().map(|c| c.norm_sqr()).sum::<f64>() < r * r {
                break p;
            }
        })
        .collect()
}

/// Samples `frames_per_point` Haar frames at each point, plus the coordinate
/// frame and its 2-plane rotations, and reports the smallest `R_{iījj̄}`.
///
/// The random frames at a point are a prefix-stable sequence, so raising
/// `frames_per_point` never raises `obc_min`.
pub fn obc_check(metric: &MetricModel, points: &[Vec<Cx>], frames_per_point: usize, seed: u64) -> Result<ObcReport> {
    if frames_per_point == 0 {
        return Err(Error::Domain("at least one frame per point".into()));
    }
    let m = metric.m();
    let rotations = plane_rotations(m);
    let samples: Vec<CurvatureSample> = crate::par::try_map_range(points.len(), |p| -> Result<CurvatureSample> {
        let z = &points[p];
        let mut sample = curvature_at(metric, z)?;
        let g = metric.metric(z)?;
        let r = metric.curvature_coords(z)?;
        let e0 = orthonormal_frame(&g);
        let mut lo = sample.obc_min;
        for u in &rotations {
            lo = lo.min(r.in_frame(&compose(&e0, u, m)).bisectional_min());
        }
        let mut rng = point_rng(seed, p);
        for _ in 0..frames_per_point {
            let u = haar_unitary(m, &mut rng);
            lo = lo.min(r.in_frame(&compose(&e0, &u, m)).bisectional_min());
        }
        sample.obc_min = lo + 0.0;
        Ok(sample)
    })?;
    let obc_min = samples.iter().map(|s| s.obc_min).fold(f64::INFINITY, f64::min);
    Ok(ObcReport {
        metric: metric.name(),
        pass: obc_min >= OBC_THRESHOLD,
        obc_min,
        frames_per_point,
        samples,
    })
}

/// `∂^n K / ∂x_{a_1} ... ∂x_{a_n}` by nested fourth-order central differences.
fn real_partial<F: Fn(&[f64; 4]) -> f64>(k: &F, x: &[f64; 4], axes: &[usize], step: f64) -> f64 {
    match axes.split_first() {
        None => k(x),
        Some((&a, rest)) => {
            let at = |t: f64| {
                let mut y = *x;
                y[a] += t * step;
                real_partial(k, &y, rest, step)
            };
            (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * step)
        }
    }
}

/// Mixed complex derivative: `∂_{z_i}` for each `holo` index and `∂_{z̄_j}` for each `anti` index.
fn complex_partial<F: Fn(&[f64; 4]) -> f64>(k: &F, x: &[f64; 4], holo: &[usize], anti: &[usize], step: f64) -> Cx {
    // ∂_z = (∂_x - i ∂_y)/2, ∂_z̄ = (∂_x + i ∂_y)/2
    let factors: Vec<(usize, f64)> =
        holo.iter().map(|&i| (i, -1.0)).chain(anti.iter().map(|&j| (j, 1.0))).collect();
    let n = factors.len();
    let mut total = ZERO;
    for mask in 0..(1usize << n) {
        let mut axes = Vec::with_capacity(n);
        let mut coef = Cx::new(1.0, 0.0);
        for (b, &(c, sg)) in factors.iter().enumerate() {
            if mask >> b & 1 == 1 {
                axes.push(2 * c + 1);
                coef *= Cx::new(0.0, sg);
            } else {
                axes.push(2 * c);
            }
        }
        total += coef * real_partial(k, x, &axes, step);
    }
    total / f64::from(1u32 << n)
}

/// Curvature from finite differences of the potential, in the Gram-Schmidt
/// frame of the finite-difference metric. An independent check of
/// [`curvature_at`].
pub fn curvature_from_potential(metric: &MetricModel, z: &[Cx], step: f64) -> Result<Tensor4> {
    metric.check_point(z)?;
    let m = metric.m();
    let mut x = [0.0; 4];
    for (i, c) in z.iter().enumerate() {
        x[2 * i] = c.re;
        x[2 * i + 1] = c.im;
    }
    let pot = |y: &[f64; 4]| {
        let w: Vec<Cx> = (0..m).map(|i| Cx::new(y[2 * i], y[2 * i + 1])).collect();
        metric.potential(&w)
    };
    let mut g = HMat::zeros(m);
    for i in 0..m {
        for j in 0..m {
            g.set(i, j, complex_partial(&pot, &x, &[i], &[j], step));
        }
    }
    // The FD metric is Hermitian only up to round-off; symmetrize.
    for i in 0..m {
        for j in i + 1..m {
            let v = 0.5 * (g.get(i, j) + g.get(j, i).conj());
            g.set(i, j, v);
            g.set(j, i, v.conj());
        }
        let d = g.get(i, i).re;
        g.set(i, i, Cx::new(d, 0.0));
    }
    let w = g.inverse().ok_or_else(|| Error::ChartDomain { metric: metric.name() })?;
    let mut r = Tensor4::zeros(m);
    for (i, j, k, l) in Tensor4::indices(m) {
        let mut v = -complex_partial(&pot, &x, &[i, k], &[j, l], step);
        for p in 0..m {
            for q in 0..m {
                let dk = complex_partial(&pot, &x, &[i, k], &[q], step);
                let dl = complex_partial(&pot, &x, &[p], &[j, l], step);
                v += w.get(q, p) * dk * dl;
            }
        }
        r.set(i, j, k, l, v);
    }
    Ok(r.in_frame(&orthonormal_frame(&g)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(v: &[(f64, f64)]) -> Vec<Cx> {
        v.iter().map(|&(a, b)| Cx::new(a, b)).collect()
    }

    #[test]
    fn flat_is_exactly_zero() {
        let f = MetricModel::Flat { m: 2 };
        let pts = sample_points(&f, 5, 1);
        let rep = obc_check(&f, &pts, 10, 1).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.obc_min, 0.0);
        assert!(rep.samples.iter().all(|s| s.s == 0.0 && s.tensor.max_abs() == 0.0));
    }

    #[test]
    fn fubini_study_at_origin() {
        let s = curvature_at(&MetricModel::FubiniStudy { m: 1 }, &pt(&[(0.0, 0.0)])).unwrap();
        assert_eq!(s.tensor.get(0, 0, 0, 0), Cx::new(2.0, 0.0));
        let s2 = curvature_at(&MetricModel::FubiniStudy { m: 2 }, &pt(&[(0.0, 0.0), (0.0, 0.0)])).unwrap();
        // R_{11̄11̄} = 2, R_{11̄22̄} = 1 in the unit frame
        assert_eq!(s2.s, 2.0 + 1.0 + 1.0 + 2.0);
    }

    #[test]
    fn poincare_fails() {
        let p = MetricModel::PoincareDisk { m: 1 };
        let pts = sample_points(&p, 4, 3);
        let rep = obc_check(&p, &pts, 5, 3).unwrap();
        assert!(!rep.pass && rep.obc_min < 0.0);
    }

    #[test]
    fn chart_errors() {
        let p = MetricModel::PoincareDisk { m: 1 };
        assert!(matches!(curvature_at(&p, &pt(&[(1.0, 0.0)])), Err(Error::ChartDomain { .. })));
        assert!(curvature_at(&MetricModel::FubiniStudy { m: 2 }, &pt(&[(0.0, 0.0)])).is_err());
    }

    #[test]
    fn closed_forms_match_the_potential() {
        let cases = [
            (MetricModel::FubiniStudy { m: 1 }, pt(&[(0.3, -0.4)])),
            (MetricModel::FubiniStudy { m: 2 }, pt(&[(0.3, -0.4), (-0.2, 0.5)])),
            (MetricModel::PoincareDisk { m: 1 }, pt(&[(0.2, 0.1)])),
            (MetricModel::PoincareDisk { m: 2 }, pt(&[(0.2, 0.1), (-0.1, 0.3)])),
            (MetricModel::ProductFlatFs, pt(&[(0.7, 0.1), (-0.6, 0.2)])),
        ];
        for (metric, z) in cases {
            let closed = curvature_at(&metric, &z).unwrap().tensor;
            let fd = curvature_from_potential(&metric, &z, 1e-2).unwrap();
            for n in 0..closed.data.len() {
                assert!((closed.data[n] - fd.data[n]).norm() < 1e-5, "{} {n}", metric.name());
            }
            assert!(closed.symmetry_defect() < 1e-12);
        }
    }

    #[test]
    fn more_frames_never_raise_the_minimum() {
        let fs = MetricModel::FubiniStudy { m: 2 };
        let pts = sample_points(&fs, 3, 7);
        let a = obc_check(&fs, &pts, 5, 7).unwrap();
        let b = obc_check(&fs, &pts, 50, 7).unwrap();
        assert!(b.obc_min <= a.obc_min && b.pass && b.obc_min > 0.0);
    }
}
