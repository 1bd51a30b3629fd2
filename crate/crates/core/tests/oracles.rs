use std::f64::consts::TAU;
use std::sync::Arc;

use cma_core::grid::{Boundary, GridDomain, ScalarField};
use cma_core::solver::{
    compatibility_defect, log_det_residual, poisson_dirichlet, radial_oracle, solve_dirichlet, solve_torus,
    SolveOptions,
};

fn sup_diff(a: &ScalarField, b: impl Fn(usize) -> f64) -> f64 {
    a.domain().interior().iter().map(|&i| (a.get(i) - b(i)).abs()).fold(0.0, f64::max)
}

/// Symbol of the 3-point second difference on a mode of wavenumber `k`.
fn symbol(k: f64, h: f64) -> f64 {
    -4.0 / (h * h) * (0.5 * k * h).sin().powi(2)
}

#[test]
fn torus_matches_fourier_symbols_in_one_variable() {
    let n = 32;
    let d = Arc::new(GridDomain::torus(1, n, TAU).unwrap());
    let h = d.h();
    let (k, l) = (1.0, 2.0);
    let phi = |p: &[f64]| 0.2 * (k * p[0] + 0.3).sin() * (l * p[1]).cos();
    let lam = 0.25 * (symbol(k, h) + symbol(l, h));
    let f = ScalarField::from_fn(d.clone(), |p| 1.0 + lam * phi(p));
    let (sol, c, rep) = solve_torus(&f, &SolveOptions::default()).unwrap();
    assert!(rep.converged);
    assert!(c.abs() < 1e-12, "c = {c}");
    let want = ScalarField::from_fn(d.clone(), phi);
    assert!(sup_diff(&sol, |i| want.get(i)) < 1e-10);
    assert!(compatibility_defect(&sol).unwrap().abs() < 1e-12);
}

#[test]
fn torus_matches_fourier_symbols_for_a_split_potential() {
    let n = 8;
    let d = Arc::new(GridDomain::torus(2, n, TAU).unwrap());
    let h = d.h();
    let a = |p: &[f64]| 0.15 * (p[0] - 0.2).cos();
    let b = |p: &[f64]| 0.1 * (p[2] + p[3]).sin();
    let la = 0.25 * symbol(1.0, h);
    let lb = 0.25 * 2.0 * symbol(1.0, h);
    // det(I + φ_{ij̄}) = (1 + Δ_1 a)(1 + Δ_2 b) for φ = a(z_1) + b(z_2)
    let f = ScalarField::from_fn(d.clone(), |p| (1.0 + la * a(p)) * (1.0 + lb * b(p)));
    let (sol, c, rep) = solve_torus(&f, &SolveOptions::default()).unwrap();
    assert!(rep.converged);
    // mean f = 1 because a and b depend on disjoint variables and have zero mean
    assert!(c.abs() < 1e-10, "c = {c}");
    let want = ScalarField::from_fn(d.clone(), |p| a(p) + b(p));
    assert!(sup_diff(&sol, |i| want.get(i)) < 1e-9);
}

#[test]
fn one_variable_solve_is_the_poisson_solve() {
    let d = Arc::new(GridDomain::ball(1, 33, 1.0).unwrap());
    let f = ScalarField::from_fn_extended(d.clone(), |p| 1.0 + 0.5 * p[0] * p[1] + (p[0] - p[1]).exp() / 4.0);
    let (u, rep) = solve_dirichlet(&d, &f, &SolveOptions::default()).unwrap();
    assert!(rep.converged);
    let v = poisson_dirichlet(&f).unwrap();
    assert!(sup_diff(&u, |i| v.get(i)) < 1e-9);
}

#[test]
fn box_solve_converges_from_the_barrier() {
    let d = Arc::new(GridDomain::cube(2, 9, 0.5).unwrap());
    let f = ScalarField::from_fn_extended(d.clone(), |p| 1.0 + p[0] * p[0]);
    let (u, rep) = solve_dirichlet(&d, &f, &SolveOptions::default()).unwrap();
    assert!(rep.converged && rep.eig_min > 0.0);
    assert_eq!(u.boundary(), Boundary::ZERO);
    assert!(log_det_residual(&u, &f).unwrap() < 1e-10);
}

#[test]
fn radial_oracle_rates_in_one_variable() {
    let prof = radial_oracle(|s| 1.0 + s, 1, 1.0).unwrap();
    let mut errs = Vec::new();
    for n in [17, 33, 65] {
        let d = Arc::new(GridDomain::ball(1, n, 1.0).unwrap());
        let f = ScalarField::from_fn_extended(d.clone(), |p| 1.0 + p[0] * p[0] + p[1] * p[1]);
        let (u, _) = solve_dirichlet(&d, &f, &SolveOptions::default()).unwrap();
        errs.push((d.h(), sup_diff(&u, |i| prof.value(d.abs2(i)))));
    }
    for w in errs.windows(2) {
        let rate = (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln();
        assert!(rate > 1.5, "{errs:?}");
    }
}

#[test]
fn radial_oracle_matches_closed_form_for_linear_density() {
    // f(s) = s, m = 2: (s v')^2 = 2 s^3 / 3, v = sqrt(2/3) (2/3) (s^{3/2} - R^3)
    let p = radial_oracle(|s| s, 2, 1.0).unwrap();
    let c = (2.0f64 / 3.0).sqrt() * 2.0 / 3.0;
    for k in 0..=10 {
        let s = k as f64 / 10.0;
        assert!((p.value(s) - c * (s.powf(1.5) - 1.0)).abs() < 1e-12);
    }
}
