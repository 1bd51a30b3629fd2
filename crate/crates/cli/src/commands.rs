use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cma_core::estimate::{
    eqm1_audit, estimate_report, final_bound_audit, potential_from_solution, run_all_suites, EstimateReport, Fault,
    TestFunctionConfig,
};
use cma_core::grid::{complex_hessian, snapshot, ScalarField};
use cma_core::kahler::{obc_check, sample_points, MetricModel};
use cma_core::rhs::{check_conditions, equivalence_identity_residual, mollify_lift, ConditionReport};
use cma_core::solver::{degenerate_pipeline, solve_dirichlet, solve_torus, SolveReport};
use serde::Serialize;
use serde_json::json;

use crate::instance::{InstanceSpec, ShapeKind};
use crate::manifest::{self, RunWriter};
use crate::CliError;

pub const REPORTS: &str = "reports.jsonl";

/// JSON lines, one record per line, each tagged with its kind.
#[derive(Default)]
struct Lines(String);

impl Lines {
    fn push<T: Serialize>(&mut self, kind: &str, data: &T) {
        let v = json!({ "kind": kind, "data": data });
        self.0.push_str(&serde_json::to_string(&v).expect("serializable"));
        self.0.push('\n');
    }
}

/// What a verb reports back to `main`.
#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: String,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Outcome { exit_code: 0, summary }
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Finishes a run that failed part-way: whatever was collected is still
/// written and listed.
fn fail(mut w: RunWriter, lines: Lines, err: CliError) -> Result<Outcome, CliError> {
    w.write(REPORTS, lines.0.as_bytes())?;
    w.finish(err.exit_code())?;
    Err(err)
}

pub fn solve(instance: &Path, out: &Path, seed: Option<u64>) -> Result<Outcome, CliError> {
    let mut spec = InstanceSpec::load(instance)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let domain = spec.domain()?;
    let m = domain.m();
    let mut w = RunWriter::open(out, "solve")?;
    w.set_instance(&spec.canonical_json(), spec.seed);
    let mut lines = Lines::default();

    let f = match spec.density(&domain, &base_dir(instance)) {
        Ok(f) => f,
        Err(e) => return fail(w, lines, e),
    };
    let cond = match check_conditions(&f, m) {
        Ok(c) => c,
        Err(e) => {
            w.stage("conditions", "failed");
            return fail(w, lines, e.into());
        }
    };
    lines.push("conditions", &cond);
    if !cond.nonnegative {
        w.stage("conditions", "failed");
        let err = CliError::Conditions(format!("density is negative (min over nodes {})", min_value(&f)));
        return fail(w, lines, err);
    }
    w.stage("conditions", "ok");
    let cfg = TestFunctionConfig { lambda: spec.verify.lambda, ..TestFunctionConfig::new(m) };

    let mut plot = String::from("stage,eps,rho_over_h,lap_sup,c1_norm,newton_iterations,final_residual\n");
    let (solution, estimate): (ScalarField, Option<EstimateReport>);
    if spec.domain.shape == ShapeKind::Torus {
        let (phi, c, rep) = match solve_torus(&f, &spec.solve) {
            Ok(x) => x,
            Err(e) => {
                w.stage("solve", "failed");
                return fail(w, lines, e.into());
            }
        };
        lines.push("solve", &rep);
        push_plot_row(&mut plot, 0, None, &rep, &phi)?;
        let gp = complex_hessian(&phi)?.add_identity();
        let feff = f.map(|v| v * c.exp());
        let (est, _) = estimate_report(&phi, &gp, &feff, &cfg)?;
        if m >= 2 {
            lines.push("eqm1_audit", &eqm1_audit(&gp, &feff)?);
        }
        w.stage("solve", status(&rep));
        solution = phi;
        estimate = Some(est);
    } else if let Some(sched) = spec.schedule()? {
        let outc = degenerate_pipeline(&domain, &f, &sched, &spec.solve);
        for s in &outc.stages {
            lines.push("stage", s);
            let _ = writeln!(
                plot,
                "{},{:e},{},{:e},{:e},{},{:e}",
                s.stage, s.eps, s.rho_over_h, s.lap_sup, s.c1_norm, s.solve.iterations, s.solve.final_residual
            );
            w.stage(&format!("stage-{}", s.stage), status(&s.solve));
        }
        if let Some(e) = outc.error {
            w.write("plot.csv", plot.as_bytes())?;
            return fail(w, lines, CliError::Solver(e.to_string()));
        }
        let u = outc.limit.expect("limit of a complete schedule");
        let (eps, rho) = *sched.stages().last().expect("non-empty schedule");
        let lifted = mollify_lift(&f, eps, rho * domain.h())?;
        let phi = potential_from_solution(&u);
        let gp = complex_hessian(&u)?;
        estimate = estimate_report(&phi, &gp, &lifted, &cfg).ok().map(|x| x.0);
        if m >= 2 {
            lines.push("eqm1_audit", &eqm1_audit(&gp, &lifted)?);
        }
        solution = u;
    } else {
        let (u, rep) = match solve_dirichlet(&domain, &f, &spec.solve) {
            Ok(x) => x,
            Err(e) => {
                w.stage("solve", "failed");
                return fail(w, lines, e.into());
            }
        };
        lines.push("solve", &rep);
        push_plot_row(&mut plot, 0, None, &rep, &u)?;
        let phi = potential_from_solution(&u);
        let gp = complex_hessian(&u)?;
        estimate = estimate_report(&phi, &gp, &f, &cfg).ok().map(|x| x.0);
        if m >= 2 {
            lines.push("eqm1_audit", &eqm1_audit(&gp, &f)?);
        }
        w.stage("solve", status(&rep));
        solution = u;
    }
    if let Some(est) = &estimate {
        lines.push("estimate", est);
        if m >= 2 {
            if let Ok(rec) = final_bound_audit(est, &cond, &cfg) {
                lines.push("closing", &rec);
            }
        }
    }
    w.write(REPORTS, lines.0.as_bytes())?;
    w.write("solution.csv", snapshot::to_csv(&solution).as_bytes())?;
    w.write("plot.csv", plot.as_bytes())?;
    w.finish(0)?;
    let lap = estimate.map_or(f64::NAN, |e| e.sup_lap);
    Ok(Outcome::ok(format!("solved on {} interior nodes; sup |Δφ| = {lap:.6e}", domain.num_interior())))
}

fn min_value(f: &ScalarField) -> f64 {
    f.values().iter().copied().fold(f64::INFINITY, f64::min)
}

fn status(rep: &SolveReport) -> &'static str {
    if rep.converged {
        "converged"
    } else {
        "not-converged"
    }
}

fn push_plot_row(plot: &mut String, stage: usize, eps: Option<(f64, f64)>, rep: &SolveReport, u: &ScalarField) -> Result<(), CliError> {
    let lap = cma_core::grid::complex_laplacian(u)?.interior_values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let (lo, hi) = u.interior_range();
    let (e, r) = eps.map_or((String::new(), String::new()), |(e, r)| (format!("{e:e}"), r.to_string()));
    let _ = writeln!(plot, "{stage},{e},{r},{lap:e},{:e},{},{:e}", lo.abs().max(hi.abs()), rep.iterations, rep.final_residual);
    Ok(())
}

pub fn lemmas(seed: u64, trials: usize, out: &Path, fault: Fault) -> Result<Outcome, CliError> {
    if trials == 0 {
        return Err(CliError::Parse("--trials must be at least 1".into()));
    }
    let mut w = RunWriter::open(out, "lemmas")?;
    w.set_seed(seed);
    let suites = run_all_suites(seed, trials, fault);
    let mut lines = Lines::default();
    let mut csv = String::from("suite,trials,violations,worst_slack,worst_trial\n");
    for s in &suites {
        lines.push("suite", s);
        let _ = writeln!(csv, "{},{},{},{:e},{}", s.name, s.trials, s.violations, s.worst_slack, s.worst_trial);
        w.stage(&s.name, if s.violations == 0 { "ok" } else { "violated" });
    }
    w.write(REPORTS, lines.0.as_bytes())?;
    w.write("lemmas.csv", csv.as_bytes())?;
    let bad: Vec<_> = suites.iter().filter(|s| s.violations > 0).collect();
    if bad.is_empty() {
        w.finish(0)?;
        return Ok(Outcome::ok(format!("{} suites, {trials} trials each, no violations", suites.len())));
    }
    let dump: Vec<_> = bad
        .iter()
        .map(|s| json!({ "suite": s.name, "trial": s.worst_trial, "counterexample": s.counterexample }))
        .collect();
    w.write("counterexamples.json", serde_json::to_string_pretty(&dump).expect("serializable").as_bytes())?;
    let err = CliError::Violation(
        bad.iter().map(|s| format!("{}: {} of {}", s.name, s.violations, s.trials)).collect::<Vec<_>>().join("; "),
    );
    w.finish(err.exit_code())?;
    Err(err)
}

pub fn curvature(metric: &str, samples: usize, frames: usize, seed: u64, out: &Path) -> Result<Outcome, CliError> {
    let model = MetricModel::from_name(metric)
        .map_err(|_| CliError::Parse(format!("unknown metric `{metric}` (known: {})", MetricModel::NAMES.join(", "))))?;
    if samples == 0 || frames == 0 {
        return Err(CliError::Parse("--samples and --frames must be at least 1".into()));
    }
    let mut w = RunWriter::open(out, "curvature")?;
    w.set_seed(seed);
    let pts = sample_points(&model, samples, seed);
    let rep = match obc_check(&model, &pts, frames, seed) {
        Ok(r) => r,
        Err(e) => return fail(w, Lines::default(), e.into()),
    };
    let mut csv = String::from("sample,x1,y1,x2,y2,S,obc_min,symmetry_defect\n");
    for (k, s) in rep.samples.iter().enumerate() {
        let c = |i: usize| s.point.get(i).copied().unwrap_or_default();
        let _ = writeln!(
            csv,
            "{k},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            c(0).re,
            c(0).im,
            c(1).re,
            c(1).im,
            s.s,
            s.obc_min,
            s.symmetry_defect
        );
    }
    let mut lines = Lines::default();
    let violates = !rep.pass;
    lines.push(
        "curvature",
        &json!({
            "metric": rep.metric,
            "samples": samples,
            "frames_per_point": frames,
            "obc_min": rep.obc_min,
            "pass": rep.pass,
            "violates_obc": violates,
            "documented_obc": model.documented_obc(),
        }),
    );
    w.stage("obc", if violates { "violates-OBC" } else { "ok" });
    w.write(REPORTS, lines.0.as_bytes())?;
    w.write("curvature.csv", csv.as_bytes())?;
    if violates && model.documented_obc() {
        let err = CliError::Violation(format!("{} has obc-min {:e}", rep.metric, rep.obc_min));
        w.finish(err.exit_code())?;
        return Err(err);
    }
    w.finish(0)?;
    let flag = if violates { " [violates-OBC]" } else { "" };
    Ok(Outcome::ok(format!("{}: obc-min {:e} over {samples} points{flag}", rep.metric, rep.obc_min)))
}

pub fn conditions(instance: &Path, out: &Path) -> Result<Outcome, CliError> {
    let spec = InstanceSpec::load(instance)?;
    let domain = spec.domain()?;
    let m = domain.m();
    let mut w = RunWriter::open(out, "conditions")?;
    w.set_instance(&spec.canonical_json(), spec.seed);
    let mut lines = Lines::default();
    let f = match spec.density(&domain, &base_dir(instance)) {
        Ok(f) => f,
        Err(e) => return fail(w, lines, e),
    };
    let cond: ConditionReport = match check_conditions(&f, m) {
        Ok(c) => c,
        Err(e) => return fail(w, lines, e.into()),
    };
    lines.push("conditions", &cond);
    if m >= 2 && cond.positive {
        let r = equivalence_identity_residual(&f, m)?;
        let core = domain.core_nodes(2);
        let sup = core.iter().map(|&i| r.get(i).abs()).fold(0.0, f64::max);
        lines.push("equivalence_identity", &json!({ "sup_residual": sup, "nodes": core.len() }));
    }
    w.write(REPORTS, lines.0.as_bytes())?;
    if !cond.nonnegative {
        w.stage("conditions", "failed");
        let err = CliError::Conditions(format!("density is negative (min over nodes {})", min_value(&f)));
        w.finish(err.exit_code())?;
        return Err(err);
    }
    w.stage("conditions", "ok");
    w.finish(0)?;
    Ok(Outcome::ok(format!("sup f = {:e}, A = {:e}, A1 = {:e}", cond.sup_f, cond.a, cond.a1)))
}

/// Re-reads a run directory without touching it.
pub fn report(out: &Path) -> Result<Outcome, CliError> {
    let man = manifest::load(out)?;
    let audit = manifest::audit(out, &man)?;
    let mut s = format!("{} (exit {}), {} artifacts\n", man.command, man.exit_code, man.artifacts.len());
    for st in &man.stages {
        let _ = writeln!(s, "  {}: {}", st.stage, st.status);
    }
    if let Ok(text) = std::fs::read_to_string(out.join(REPORTS)) {
        let mut kinds: Vec<(String, usize)> = Vec::new();
        for line in text.lines() {
            let v: serde_json::Value =
                serde_json::from_str(line).map_err(|e| CliError::Parse(format!("{REPORTS}: {e}")))?;
            let k = v["kind"].as_str().unwrap_or("?").to_string();
            match kinds.iter_mut().find(|x| x.0 == k) {
                Some(x) => x.1 += 1,
                None => kinds.push((k, 1)),
            }
        }
        for (k, n) in kinds {
            let _ = writeln!(s, "  {n} {k} record(s)");
        }
    }
    if !audit.clean() {
        return Err(CliError::Io(format!(
            "run directory does not match its manifest: missing {:?}, modified {:?}, unlisted {:?}",
            audit.missing, audit.modified, audit.unlisted
        )));
    }
    Ok(Outcome::ok(s.trim_end().to_string()))
}
