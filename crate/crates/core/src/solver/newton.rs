//! Damped Newton iteration shared by the Dirichlet and periodic problems.

use std::time::Instant;

use super::{SolveOptions, SolveReport};
use crate::error::{Error, Result};
use crate::linsolve::{Csr, LinearSolver};

/// State of the discrete system at one iterate.
pub(crate) struct Eval<A> {
    pub g: Vec<f64>,
    /// Sup norm of `g`.
    pub res: f64,
    /// Node and value of the smallest Hessian eigenvalue.
    pub eig_min: (usize, f64),
    /// Whatever the Jacobian assembly needs.
    pub aux: A,
}

pub(crate) trait System {
    type Aux;
    fn len(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<Eval<Self::Aux>>;
    fn jacobian(&self, x: &[f64], eval: &Eval<Self::Aux>) -> Csr;
}

pub(crate) fn sup_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0f64, |a, v| if v.is_nan() { f64::NAN } else { a.max(v.abs()) })
}

/// Runs Newton from `x`; returns the final iterate and the report.
///
/// A step is accepted only if the new Hessian field has smallest eigenvalue
/// at least `opts.positivity_floor` everywhere and the sup-norm residual
/// strictly decreases; otherwise the step is shrunk. If no step down to
/// `opts.min_step` keeps positivity the solve fails with
/// [`Error::PositivityBreakdown`]; if positivity holds but the residual will
/// not decrease, the iteration stops with `converged = false`.
pub(crate) fn newton<S: System>(
    sys: &S,
    mut x: Vec<f64>,
    opts: &SolveOptions,
    linear: &mut LinearSolver,
) -> Result<(Vec<f64>, SolveReport)> {
    opts.validate()?;
    let start = Instant::now();
    let stats0 = linear.stats();
    let mut eval = sys.evaluate(&x)?;
    if !(eval.eig_min.1 >= opts.positivity_floor) {
        return Err(Error::PositivityBreakdown { node: eval.eig_min.0, eig_min: eval.eig_min.1 });
    }
    let mut history = vec![eval.res];
    let mut iterations = 0;
    let mut converged = eval.res <= opts.tol;
    while !converged && iterations < opts.max_iter {
        let jac = sys.jacobian(&x, &eval);
        let rhs: Vec<f64> = eval.g.iter().map(|v| -v).collect();
        let dx = linear.solve(&jac, &rhs)?;
        let mut t = 1.0;
        let mut accepted = None;
        let mut last_positivity = None;
        while t >= opts.min_step {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + t * d).collect();
            let e = sys.evaluate(&trial)?;
            if !(e.eig_min.1 >= opts.positivity_floor) {
                last_positivity = Some(e.eig_min);
            } else if e.res < eval.res {
                accepted = Some((trial, e));
                break;
            } else {
                last_positivity = None;
            }
            t *= opts.shrink;
        }
        match accepted {
            Some((trial, e)) => {
                x = trial;
                eval = e;
                iterations += 1;
                history.push(eval.res);
                converged = eval.res <= opts.tol;
            }
            None => {
                if let Some((node, eig_min)) = last_positivity {
                    return Err(Error::PositivityBreakdown { node, eig_min });
                }
                break;
            }
        }
    }
    let stats = linear.stats();
    let report = SolveReport {
        converged,
        iterations,
        final_residual: eval.res,
        residual_history: history,
        nodes: sys.len(),
        eig_min: eval.eig_min.1,
        factorizations: stats.factorizations - stats0.factorizations,
        gmres_iterations: stats.gmres_iterations - stats0.gmres_iterations,
        normalization: None,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((x, report))
}
