//! Radial reduction: for `u = v(|z|^2)`, `det u_{ij̄} = (v')^{m-1}(v' + s v'')`,
//! so `d/ds (s v')^m = m s^{m-1} f(s)` and
//! `s v'(s) = (m ∫_0^s t^{m-1} f(t) dt)^{1/m}` with `v(R^2) = 0`.

use crate::error::{Error, Result};

/// 16-point Gauss-Legendre nodes and weights on [-1, 1] (positive half).
const GL_X: [f64; 8] = [
    0.0950125098376374401853193,
    0.2816035507792589132304605,
    0.4580167776572273863424194,
    0.6178762444026437484466718,
    0.7554044083550030338951012,
    0.8656312023878317438804679,
    0.9445750230732325760779884,
    0.9894009349916499325961542,
];
const GL_W: [f64; 8] = [
    0.1894506104550684962853967,
    0.1826034150449235888667637,
    0.1691565193950025381893121,
    0.1495959888165767320815017,
    0.1246289712555338720524763,
    0.0951585116824927848099251,
    0.0622535239386478928628438,
    0.0271524594117540948517806,
];

/// Number of geometrically graded panels on `[0, R^2]` (each half the next).
const PANELS: usize = 48;

fn gauss<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let mut s = 0.0;
    for k in 0..8 {
        s += GL_W[k] * (f(c - r * GL_X[k]) + f(c + r * GL_X[k]));
    }
    s * r
}

/// Radial profile `v` on `[0, R^2]`.
pub struct RadialProfile {
    m: usize,
    r2: f64,
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Panel breakpoints, increasing from 0 to `R^2`.
    breaks: Vec<f64>,
    /// `m ∫_0^{breaks[j]} t^{m-1} f` at each breakpoint.
    mass: Vec<f64>,
    /// `∫_{breaks[j]}^{R^2} v'` at each breakpoint.
    tail: Vec<f64>,
}

impl std::fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialProfile").field("m", &self.m).field("r2", &self.r2).finish()
    }
}

impl RadialProfile {
    fn panel(&self, s: f64) -> usize {
        match self.breaks.binary_search_by(|b| b.partial_cmp(&s).unwrap()) {
            Ok(j) => j.min(self.breaks.len() - 2),
            Err(j) => j.saturating_sub(1).min(self.breaks.len() - 2),
        }
    }

    fn mass_at(&self, s: f64) -> f64 {
        let j = self.panel(s);
        let m = self.m as i32;
        let a = self.breaks[j];
        self.mass[j] + self.m as f64 * gauss(a, s, |t| t.powi(m - 1) * (self.f)(t))
    }

    /// `v'(s)`.
    pub fn derivative(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return (self.f)(0.0).max(0.0).powf(1.0 / self.m as f64);
        }
        self.mass_at(s).max(0.0).powf(1.0 / self.m as f64) / s
    }

    /// `v(s)`, with `v(R^2) = 0`.
    pub fn value(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.r2);
        let j = self.panel(s);
        let b = self.breaks[j + 1];
        -(self.tail[j + 1] + gauss(s, b, |t| self.derivative(t)))
    }

    pub fn radius_squared(&self) -> f64 {
        self.r2
    }
}

/// Builds the radial solution for density `f(s)`, `s = |z|^2`, on the ball of radius `r`.
pub fn radial_oracle<F>(f: F, m: usize, r: f64) -> Result<RadialProfile>
where
    F: Fn(f64) -> f64 + Send + Sync + 'static,
{
    if !(1..=2).contains(&m) {
        return Err(Error::Domain(format!("complex dimension {m} not in 1..=2")));
    }
    if !(r > 0.0) {
        return Err(Error::Domain(format!("radius {r}")));
    }
    let r2 = r * r;
    let mut breaks = vec![0.0];
    for k in (0..PANELS).rev() {
        breaks.push(r2 * 0.5f64.powi(k as i32));
    }
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        for k in 0..8 {
            for t in [0.5 * (a + b) - 0.5 * (b - a) * GL_X[k], 0.5 * (a + b) + 0.5 * (b - a) * GL_X[k]] {
                let v = f(t);
                if !(v >= 0.0) {
                    return Err(Error::Domain(format!("radial density {v} at s = {t}")));
                }
            }
        }
    }
    let mi = m as i32;
    let mut mass = vec![0.0];
    for w in breaks.windows(2) {
        let last = *mass.last().unwrap();
        mass.push(last + m as f64 * gauss(w[0], w[1], |t| t.powi(mi - 1) * f(t)));
    }
    let mut prof = RadialProfile { m, r2, f: Box::new(f), breaks, mass, tail: Vec::new() };
    let np = prof.breaks.len();
    let mut tail = vec![0.0; np];
    for j in (0..np - 1).rev() {
        let (a, b) = (prof.breaks[j], prof.breaks[j + 1]);
        tail[j] = tail[j + 1] + gauss(a, b, |t| prof.derivative(t));
    }
    prof.tail = tail;
    Ok(prof)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_density_gives_the_paraboloid() {
        for m in 1..=2 {
            let p = radial_oracle(|_| 1.0, m, 1.3).unwrap();
            for k in 0..=20 {
                let s = 1.69 * k as f64 / 20.0;
                assert!((p.value(s) - (s - 1.69)).abs() < 1e-13, "m={m} s={s}");
            }
        }
    }

    #[test]
    fn zero_density_is_flat() {
        let p = radial_oracle(|_| 0.0, 2, 1.0).unwrap();
        assert_eq!(p.value(0.3), 0.0);
    }

    #[test]
    fn negative_density_is_rejected() {
        assert!(radial_oracle(|s| s - 0.5, 2, 1.0).is_err());
    }
}
