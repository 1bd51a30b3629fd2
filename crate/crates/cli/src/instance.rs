//! Instance files: TOML with a `schema` key.
//!
//! ```toml
//! schema = "cmalab-instance/1"
//! seed = 42
//!
//! [domain]
//! shape = "ball"      # ball | box | torus
//! m = 2
//! n = 17
//! size = 1.0          # radius, half width or period
//!
//! [density]
//! expr = "s"          # over x1, y1, x2, y2 and s = |z|^2
//!
//! [schedule]          # optional; omit for a single solve
//! eps = [0.1, 0.01, 0.001]
//! rho_over_h = [4.0, 2.0]
//!
//! [solve]             # optional Newton options
//! tol = 1e-10
//! ```

use std::path::Path;
use std::sync::Arc;

use cma_core::grid::{snapshot, Boundary, GridDomain, NodeClass, ScalarField};
use cma_core::rhs::RegularizationSchedule;
use cma_core::solver::SolveOptions;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA: &str = "cmalab-instance/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Ball,
    Box,
    Torus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub shape: ShapeKind,
    pub m: usize,
    pub n: usize,
    #[serde(default = "one")]
    pub size: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub expr: Option<String>,
    /// Snapshot written by an earlier `solve`, relative to the instance file.
    pub file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_rho")]
    pub rho_over_h: Vec<f64>,
}

fn default_eps() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3]
}

fn default_rho() -> Vec<f64> {
    vec![4.0, 2.0]
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Fixed `λ`; by default `2 + osc φ` plus a small margin.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub schema: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub domain: DomainSpec,
    pub density: DensitySpec,
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default)]
    pub verify: VerifySpec,
}

fn default_seed() -> u64 {
    42
}

impl InstanceSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let spec: InstanceSpec = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        if spec.schema != SCHEMA {
            return Err(CliError::Parse(format!("schema `{}` (expected `{SCHEMA}`)", spec.schema)));
        }
        match (&spec.density.expr, &spec.density.file) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(CliError::Parse("density needs exactly one of `expr` and `file`".into())),
        }
        if spec.schedule.is_some() && spec.domain.shape == ShapeKind::Torus {
            return Err(CliError::Parse("schedules apply to Dirichlet domains only".into()));
        }
        spec.solve.validate().map_err(|e| CliError::Parse(e.to_string()))?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical JSON; hashing this rather than the file keeps the hash
    /// stable under reformatting.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }

    pub fn domain(&self) -> Result<Arc<GridDomain>, CliError> {
        let d = &self.domain;
        let g = match d.shape {
            ShapeKind::Ball => GridDomain::ball(d.m, d.n, d.size),
            ShapeKind::Box => GridDomain::cube(d.m, d.n, d.size),
            ShapeKind::Torus => GridDomain::torus(d.m, d.n, d.size),
        };
        g.map(Arc::new).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn schedule(&self) -> Result<Option<RegularizationSchedule>, CliError> {
        self.schedule
            .as_ref()
            .map(|s| RegularizationSchedule::new(s.eps.clone(), s.rho_over_h.clone()))
            .transpose()
            .map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Samples the density on every node of `domain`. `base` resolves `file`.
    pub fn density(&self, domain: &Arc<GridDomain>, base: &Path) -> Result<ScalarField, CliError> {
        if let Some(expr) = &self.density.expr {
            return density_from_expr(expr, domain);
        }
        let path = base.join(self.density.file.as_deref().unwrap_or_default());
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let f = snapshot::from_csv(&text).map_err(|e| CliError::Parse(e.to_string()))?;
        let g = f.domain();
        if (g.m(), g.n(), g.shape()) != (domain.m(), domain.n(), domain.shape()) {
            return Err(CliError::Parse(format!("{} was written on a different grid", path.display())));
        }
        Ok(f.extend_radially())
    }
}

/// Evaluates `expr` at every node; band nodes take the value at their
/// projection onto the boundary.
pub fn density_from_expr(expr: &str, domain: &Arc<GridDomain>) -> Result<ScalarField, CliError> {
    let parsed: meval::Expr = expr.parse().map_err(|e| CliError::Parse(format!("density `{expr}`: {e}")))?;
    let f = parsed
        .bind5("x1", "y1", "x2", "y2", "s")
        .map_err(|e| CliError::Parse(format!("density `{expr}`: {e}")))?;
    let axes = domain.axes();
    let values: Vec<f64> = (0..domain.num_nodes())
        .map(|i| {
            let mut p = domain.coords(i);
            if domain.class(i) != NodeClass::Interior {
                p = domain.project_to_boundary(&p);
            }
            let s: f64 = p[..axes].iter().map(|v| v * v).sum();
            f(p[0], p[1], p[2], p[3], s)
        })
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(CliError::Parse(format!("density `{expr}` is not finite at node {i}")));
    }
    ScalarField::from_values(domain.clone(), values, Boundary::Nodal).map_err(|e| CliError::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
schema = "cmalab-instance/1"
[domain]
shape = "ball"
m = 1
n = 9
[density]
expr = "1 + x1*y1 + s"
"#;

    #[test]
    fn parses_and_samples() {
        let spec = InstanceSpec::parse(BASIC).unwrap();
        assert_eq!(spec.seed, 42);
        let d = spec.domain().unwrap();
        let f = spec.density(&d, Path::new(".")).unwrap();
        let i = d.interior()[3];
        let p = d.coords(i);
        assert!((f.get(i) - (1.0 + p[0] * p[1] + p[0] * p[0] + p[1] * p[1])).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(InstanceSpec::parse(&BASIC.replace("instance/1", "instance/9")).is_err());
        assert!(InstanceSpec::parse(&BASIC.replace("n = 9", "n = 9\nbogus = 1")).is_err());
        let spec = InstanceSpec::parse(&BASIC.replace("1 + x1*y1 + s", "q + 1")).unwrap();
        assert!(spec.density(&spec.domain().unwrap(), Path::new(".")).is_err());
    }

    #[test]
    fn canonical_hash_ignores_formatting() {
        let a = InstanceSpec::parse(BASIC).unwrap();
        let b = InstanceSpec::parse(&BASIC.replace("m = 1", "m    =   1   # comment")).unwrap();
        assert_eq!(a.canonical_json(), b.canonical_json());
    }
}
