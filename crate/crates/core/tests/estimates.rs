use std::sync::Arc;

use cma_core::estimate::{
    eqm1_audit, estimate_report, final_bound_audit, fit_closing, lemma_m2_identity, potential_from_solution,
    third_order_at, TestFunctionConfig,
};
use cma_core::grid::{complex_hessian, GridDomain, ScalarField};
use cma_core::rhs::check_conditions;
use cma_core::solver::{solve_dirichlet, solve_torus, SolveOptions};
use cma_core::Error;

fn ball_solve(f: impl Fn(&[f64]) -> f64 + Sync + Send) -> (ScalarField, ScalarField) {
    let d = Arc::new(GridDomain::ball(2, 9, 1.0).unwrap());
    let f = ScalarField::from_fn_extended(d.clone(), f);
    let (u, rep) = solve_dirichlet(&d, &f, &SolveOptions::default()).unwrap();
    assert!(rep.converged);
    (u, f)
}

#[test]
fn inequalities_at_the_maximum_of_h() {
    let (u, f) = ball_solve(|p| 1.0 + 0.4 * p[0] + 0.3 * p[1] * p[2]);
    let phi = potential_from_solution(&u);
    let g = complex_hessian(&u).unwrap();
    let cfg = TestFunctionConfig::new(2);
    let (rep, prof) = estimate_report(&phi, &g, &f, &cfg).unwrap();
    assert!(rep.eqm1_slack.unwrap() >= -1e-8);
    assert!(rep.lambda > 2.0 && rep.h_max.unwrap() > 0.0);
    if let Some(mp) = rep.max_principle {
        assert!(mp <= rep.max_principle_tau.unwrap(), "{mp}");
    }
    let audit = eqm1_audit(&g, &f).unwrap();
    assert!(audit.min_slack >= -1e-8, "{audit:?}");
    let third = third_order_at(&phi, &g, &prof, &cfg).unwrap();
    assert_eq!(third.checks.len(), 2);
}

#[test]
fn closing_fit_over_several_solves() {
    let mut recs = Vec::new();
    for a in [0.0, 0.2, 0.4] {
        let (u, f) = ball_solve(move |p| 1.0 + a * p[0] + a * a * p[3] * p[3]);
        let phi = potential_from_solution(&u);
        let g = complex_hessian(&u).unwrap();
        let cfg = TestFunctionConfig::new(2);
        let (rep, _) = estimate_report(&phi, &g, &f, &cfg).unwrap();
        let cond = check_conditions(&f, 2).unwrap();
        let rec = final_bound_audit(&rep, &cond, &cfg).unwrap();
        assert!(rec.eqm1_ok);
        recs.push(rec);
    }
    let fit = fit_closing(&recs, 2).unwrap();
    assert!(fit.all_satisfied);
    assert!(recs.iter().all(|r| r.x <= fit.c3 + 1e-9));
}

#[test]
fn missing_fields_are_reported() {
    let (u, f) = ball_solve(|_| 1.0);
    let phi = potential_from_solution(&u);
    let g = complex_hessian(&u).unwrap();
    let cfg = TestFunctionConfig::new(2);
    let (mut rep, _) = estimate_report(&phi, &g, &f, &cfg).unwrap();
    rep.eqm1_lhs = None;
    let cond = check_conditions(&f, 2).unwrap();
    assert!(matches!(final_bound_audit(&rep, &cond, &cfg), Err(Error::IncompleteReport(_))));
}

#[test]
fn m2_identity_on_a_small_box() {
    let d = Arc::new(GridDomain::cube(2, 9, 1.0 / 16.0).unwrap());
    let f = ScalarField::from_fn_extended(d.clone(), |p| (0.5 * p[0] - p[3] + p[1] * p[2]).exp());
    let opts = SolveOptions { tol: 1e-12, ..SolveOptions::default() };
    let (u, rep) = solve_dirichlet(&d, &f, &opts).unwrap();
    assert!(rep.converged);
    let id = lemma_m2_identity(&u, &f).unwrap();
    let (res, disc) = id.core_max();
    assert!(res <= 10.0 * opts.tol + disc, "{res} {disc}");
}

#[test]
fn torus_gradient_equation_residual_shrinks() {
    let mut res = Vec::new();
    for n in [17, 33] {
        let d = Arc::new(GridDomain::torus(1, n, std::f64::consts::TAU).unwrap());
        let f = ScalarField::from_fn(d.clone(), |p| 1.0 + 0.5 * p[0].sin() * (p[1] + 0.4).cos());
        let (phi, c, _) = solve_torus(&f, &SolveOptions::default()).unwrap();
        let g = complex_hessian(&phi).unwrap().add_identity();
        let (rep, _) = estimate_report(&phi, &g, &f.map(|v| v * c.exp()), &TestFunctionConfig::new(1)).unwrap();
        assert!(rep.eqm1_lhs.is_none());
        res.push(rep.grad_eq_residual.unwrap());
    }
    assert!(res[1] < res[0]);
}
