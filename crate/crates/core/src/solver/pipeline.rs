//! Continuation through a regularization schedule: each stage lifts and
//! mollifies the density, then solves warm-started from the previous stage.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{solve_dirichlet_with, SolveOptions, SolveReport};
use crate::error::{Error, Result};
use crate::estimate::{eqm1_audit, estimate_report, potential_from_solution, EstimateReport, TestFunctionConfig};
use crate::grid::{complex_hessian, complex_laplacian, gradient, GridDomain, ScalarField};
use crate::linsolve::{LinearOptions, LinearSolver};
use crate::par;
use crate::rhs::{check_conditions, mollify_lift, ConditionReport, RegularizationSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub eps: f64,
    /// Mollifier radius in units of `h`.
    pub rho_over_h: f64,
    pub solve: SolveReport,
    /// `sup |u| + sup |∇u|` over interior nodes.
    pub c1_norm: f64,
    /// `sup |Δu|` over interior nodes.
    pub lap_sup: f64,
    /// Largest `lap_sup` seen so far.
    pub lap_sup_running_max: f64,
    /// Conditions of the lifted density.
    pub conditions: ConditionReport,
    /// `None` when the solution is not admissible enough to profile.
    pub estimate: Option<EstimateReport>,
    /// Smallest node-wise slack of the trace inequality; `None` when `m < 2`.
    pub eqm1_min_slack: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub stages: Vec<StageRecord>,
    /// Solution of the last stage, when every stage succeeded.
    pub limit: Option<ScalarField>,
    /// The failure that stopped the schedule, if any.
    pub error: Option<Error>,
}

/// Runs every stage of `sched`, halting at the first failure with the
/// history so far.
pub fn degenerate_pipeline(
    domain: &Arc<GridDomain>,
    f: &ScalarField,
    sched: &RegularizationSchedule,
    opts: &SolveOptions,
) -> PipelineOutcome {
    let mut out = PipelineOutcome { stages: Vec::new(), limit: None, error: None };
    if let Err(e) = sched.validate().and_then(|_| opts.validate()) {
        out.error = Some(e);
        return out;
    }
    let mut linear = LinearSolver::new(LinearOptions::default());
    let mut prev: Option<ScalarField> = None;
    let mut running = 0.0f64;
    for (stage, (eps, rho_over_h)) in sched.stages().into_iter().enumerate() {
        match run_stage(domain, f, eps, rho_over_h, opts, prev.as_ref(), &mut linear) {
            Ok((u, mut rec)) => {
                running = running.max(rec.lap_sup);
                rec.stage = stage;
                rec.lap_sup_running_max = running;
                let ok = rec.solve.converged;
                out.stages.push(rec);
                prev = Some(u);
                if !ok {
                    out.error = Some(Error::LinearSolve(format!("stage {stage} did not converge")));
                    return out;
                }
            }
            Err(e) => {
                out.error = Some(e);
                return out;
            }
        }
    }
    out.limit = prev;
    out
}

fn run_stage(
    domain: &Arc<GridDomain>,
    f: &ScalarField,
    eps: f64,
    rho_over_h: f64,
    opts: &SolveOptions,
    start: Option<&ScalarField>,
    linear: &mut LinearSolver,
) -> Result<(ScalarField, StageRecord)> {
    let m = domain.m();
    let lifted = mollify_lift(f, eps, rho_over_h * domain.h())?;
    let conditions = check_conditions(&lifted, m)?;
    let (u, solve) = solve_dirichlet_with(domain, &lifted, opts, start, linear)?;
    let (lo, hi) = u.interior_range();
    let grad = gradient(&u)?;
    let gn: Vec<f64> = grad.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let lap: Vec<f64> = complex_laplacian(&u)?.interior_values().iter().map(|v| v.abs()).collect();
    let c1_norm = lo.abs().max(hi.abs()) + par::argmax(&gn).map_or(0.0, |x| x.1);
    let lap_sup = par::argmax(&lap).map_or(0.0, |x| x.1);
    let g = complex_hessian(&u).ok();
    let estimate = g.as_ref().and_then(|g| {
        let phi = potential_from_solution(&u);
        estimate_report(&phi, g, &lifted, &TestFunctionConfig::new(m)).ok().map(|x| x.0)
    });
    let eqm1_min_slack = match &g {
        Some(g) if m >= 2 => Some(eqm1_audit(g, &lifted)?.min_slack),
        _ => None,
    };
    let rec = StageRecord {
        stage: 0,
        eps,
        rho_over_h,
        solve,
        c1_norm,
        lap_sup,
        lap_sup_running_max: lap_sup,
        conditions,
        estimate,
        eqm1_min_slack,
    };
    Ok((u, rec))
}
