//! Pointwise inequalities used in the Laplacian estimate, and randomized
//! trial suites for each.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::TestFunctionConfig;
use crate::error::{Error, Result};
use crate::par;

const REL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

impl LemmaCheck {
    /// `rhs - lhs` for `lhs ≤ rhs` style checks.
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// `(Σ 1/B_i)^{m-1} ≥ Σ B_i / Π B_i` with `m = B.len() ≥ 2`.
/// Returned with `lhs`/`rhs` swapped into `≤` form: `lhs = ΣB/ΠB`, `rhs = (Σ1/B)^{m-1}`.
pub fn lemma_newton_inequality(b: &[f64]) -> Result<LemmaCheck> {
    let m = b.len();
    if m < 2 {
        return Err(Error::Domain(format!("need at least two entries, got {m}")));
    }
    if let Some(v) = b.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Domain(format!("entry {v} is not positive")));
    }
    let inv_sum: f64 = b.iter().map(|v| 1.0 / v).sum();
    let big = inv_sum.powi(m as i32 - 1);
    // Σ B_i / Π B_i = Σ_i Π_{j≠i} 1/B_j, which avoids overflow in the product
    let small: f64 = (0..m)
        .map(|i| (0..m).filter(|&j| j != i).map(|j| 1.0 / b[j]).product::<f64>())
        .sum();
    let scale = big.abs().max(small.abs());
    Ok(LemmaCheck { lhs: small, rhs: big, ok: small <= big + REL_SLACK * scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseSplit {
    /// 1 when `a` has entries of both signs, 2 otherwise.
    pub case: u8,
    /// `(Σa)^2/(m-1) - Σa^2`.
    pub value: f64,
    /// Case 1 only: whether `value ≤ 0` (up to round-off).
    pub bound_ok: Option<bool>,
}

/// Sign split of `a_i = g'^{iī} φ_{iīx}` at a point.
pub fn lemma_case_split(a: &[f64], m: usize) -> Result<CaseSplit> {
    if m < 2 {
        return Err(Error::Domain("the split needs m >= 2".into()));
    }
    if a.len() != m {
        return Err(Error::Domain(format!("vector of length {} for m = {m}", a.len())));
    }
    let sum: f64 = a.iter().sum();
    let sq: f64 = a.iter().map(|v| v * v).sum();
    let value = sum * sum / (m - 1) as f64 - sq;
    let mixed = a.iter().any(|&v| v > 0.0) && a.iter().any(|&v| v < 0.0);
    if mixed {
        Ok(CaseSplit { case: 1, value, bound_ok: Some(value <= REL_SLACK * sq) })
    } else {
        Ok(CaseSplit { case: 2, value, bound_ok: None })
    }
}

/// Inputs of the third-order bound at one point, in a frame where `g'` is diagonal.
#[derive(Debug, Clone)]
pub struct ThirdOrderInput {
    /// `g'_{iī}` (positive).
    pub g_diag: Vec<f64>,
    /// `T[i][j] = φ_{i j̄ k}` for the fixed direction `k`.
    pub third: Vec<Vec<Complex64>>,
    /// `φ_j = ∂φ/∂z^j`.
    pub grad: Vec<Complex64>,
    /// `Δφ`; `m + Δφ = Σ g'_{iī}` in flat coordinates.
    pub lap: f64,
    /// `α'(φ)` at the point.
    pub alpha_prime: f64,
}

/// `(1/(m-1)) |Σ_i g'^{iī} φ_{iīk}|^2 - Σ_{ij} g'^{iī} g'^{jj̄} |φ_{ij̄k}|^2
///   ≤ (4m/(m-1)) α'^2 |∇φ|^2 (m + Δφ) Σ_i g'^{iī}`,
/// with `|∇φ|^2 = Σ_j |φ_j|^2`. `slack` is an absolute allowance added to the right side.
pub fn lemma_third_order_bound(input: &ThirdOrderInput, slack: f64) -> Result<LemmaCheck> {
    let m = input.g_diag.len();
    if m < 2 {
        return Err(Error::Domain("the bound needs m >= 2".into()));
    }
    if let Some(v) = input.g_diag.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Domain(format!("g' diagonal entry {v} is not positive")));
    }
    if input.third.len() != m || input.third.iter().any(|r| r.len() != m) || input.grad.len() != m {
        return Err(Error::Domain("third-order slice or gradient has the wrong shape".into()));
    }
    let inv: Vec<f64> = input.g_diag.iter().map(|v| 1.0 / v).collect();
    let trace_term: Complex64 = (0..m).map(|i| input.third[i][i] * inv[i]).sum();
    let mut full = 0.0;
    for i in 0..m {
        for j in 0..m {
            full += inv[i] * inv[j] * input.third[i][j].norm_sqr();
        }
    }
    let lhs = trace_term.norm_sqr() / (m - 1) as f64 - full;
    let grad2: f64 = input.grad.iter().map(|g| g.norm_sqr()).sum();
    let mf = m as f64;
    let rhs = 4.0 * mf / (mf - 1.0)
        * input.alpha_prime.powi(2)
        * grad2
        * (mf + input.lap)
        * inv.iter().sum::<f64>();
    let scale = lhs.abs().max(rhs.abs()).max(full);
    Ok(LemmaCheck { lhs, rhs, ok: lhs <= rhs + slack + REL_SLACK * scale })
}

/// Hook for checking that the trial harness reports violations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    #[default]
    None,
    /// Reverses the Newton-type inequality before checking it.
    NegateNewton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` seen (negative means a violation).
    pub worst_slack: f64,
    pub worst_trial: usize,
    /// Inputs of the first violating trial.
    pub counterexample: Option<String>,
}

/// One trial: `(rhs - lhs, ok, description of the inputs)`.
type Trial = (f64, bool, String);

fn rng_for(seed: u64, suite: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ suite.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(trial as u64);
    rng
}

fn run_suite<F>(name: &str, seed: u64, suite: u64, trials: usize, trial: F) -> SuiteReport
where
    F: Fn(&mut ChaCha8Rng) -> Trial + Sync + Send,
{
    let results: Vec<Trial> = par::map_range(trials, |k| trial(&mut rng_for(seed, suite, k)));
    let slacks: Vec<f64> = results.iter().map(|r| r.0).collect();
    let (worst_trial, worst_slack) = par::argmin(&slacks).unwrap_or((0, f64::INFINITY));
    let violations = results.iter().filter(|r| !r.1).count();
    let counterexample = results.iter().find(|r| !r.1).map(|r| r.2.clone());
    SuiteReport { name: name.to_string(), trials, violations, worst_slack, worst_trial, counterexample }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn newton_suite(seed: u64, trials: usize, fault: Fault) -> SuiteReport {
    run_suite("newton-inequality", seed, 1, trials, |rng| {
        let m = rng.random_range(2..=4);
        let b: Vec<f64> = (0..m).map(|_| log_uniform(rng, 1e-3, 1e3)).collect();
        let c = lemma_newton_inequality(&b).expect("positive inputs");
        let (slack, ok) = match fault {
            Fault::None => (c.slack(), c.ok),
            Fault::NegateNewton => (-c.slack(), !c.ok),
        };
        (slack / c.rhs.abs().max(c.lhs.abs()), ok, format!("B = {b:?}, lhs = {}, rhs = {}", c.lhs, c.rhs))
    })
}

pub fn case_split_suite(seed: u64, trials: usize) -> SuiteReport {
    run_suite("case-split", seed, 2, trials, |rng| {
        let m = rng.random_range(2..=6);
        let mut a: Vec<f64> = (0..m).map(|_| normal(rng) * log_uniform(rng, 1e-3, 1e3)).collect();
        // force mixed signs
        let i = rng.random_range(0..m);
        let j = (i + 1 + rng.random_range(0..m - 1)) % m;
        a[i] = a[i].abs().max(f64::MIN_POSITIVE);
        a[j] = -a[j].abs().max(f64::MIN_POSITIVE);
        let c = lemma_case_split(&a, m).expect("valid input");
        let sq: f64 = a.iter().map(|v| v * v).sum();
        (-c.value / sq, c.bound_ok == Some(true), format!("a = {a:?}, value = {}", c.value))
    })
}

/// Random data obeying `Σ_i φ_{iīk} = α' φ_k (m + Δφ)`; every other trial makes
/// the real parts `φ_{iīx}` one-signed.
pub fn third_order_suite(seed: u64, trials: usize) -> SuiteReport {
    run_suite("third-order", seed, 3, trials, |rng| {
        let m = rng.random_range(2..=3);
        let one_signed = rng.random::<bool>();
        let input = synthetic_third_order(rng, m, one_signed);
        let c = lemma_third_order_bound(&input, 0.0).expect("valid input");
        let scale = c.rhs.abs().max(c.lhs.abs()).max(1e-300);
        (c.slack() / scale, c.ok, format!("{input:?}"))
    })
}

pub(crate) fn synthetic_third_order(rng: &mut ChaCha8Rng, m: usize, one_signed: bool) -> ThirdOrderInput {
    let g_diag: Vec<f64> = (0..m).map(|_| log_uniform(rng, 0.05, 20.0)).collect();
    let trace: f64 = g_diag.iter().sum();
    let lap = trace - m as f64;
    let cfg = TestFunctionConfig::new(m);
    let x = 2.0 + 8.0 * rng.random::<f64>();
    let alpha_prime = cfg.alpha1(x);
    let mut grad: Vec<Complex64> = (0..m).map(|_| Complex64::new(normal(rng), normal(rng))).collect();
    let k = rng.random_range(0..m);
    let mut target = alpha_prime * grad[k] * trace;
    if one_signed && target.re < 0.0 {
        for g in grad.iter_mut() {
            *g = -*g;
        }
        target = -target;
    }
    let mut third: Vec<Vec<Complex64>> = (0..m)
        .map(|_| (0..m).map(|_| Complex64::new(normal(rng), normal(rng)) * 3.0).collect())
        .collect();
    if one_signed {
        // φ_{iīk} = (a_i - i b_i)/2 with a_i ≥ 0 summing to 2 Re(target)
        let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 1e-3).collect();
        let ws: f64 = w.iter().sum();
        let bw: Vec<f64> = (0..m).map(|_| normal(rng)).collect();
        let bs: f64 = bw.iter().sum();
        for i in 0..m {
            let a = 2.0 * target.re * w[i] / ws;
            let b = -2.0 * target.im / m as f64 + (bw[i] - bs / m as f64);
            third[i][i] = Complex64::new(0.5 * a, -0.5 * b);
        }
    } else {
        let partial: Complex64 = (0..m - 1).map(|i| third[i][i]).sum();
        third[m - 1][m - 1] = target - partial;
    }
    ThirdOrderInput { g_diag, third, grad, lap, alpha_prime }
}

/// `α'' + C0 α'^2 = 0` at random points of `[2, λ]`.
pub fn alpha_identity_suite(seed: u64, trials: usize, m: usize, lambda: f64) -> SuiteReport {
    let cfg = TestFunctionConfig::new(m);
    run_suite("alpha-identity", seed, 4, trials, move |rng| {
        let x = 2.0 + (lambda - 2.0) * rng.random::<f64>();
        let v = cfg.alpha2(x) + cfg.c0 * cfg.alpha1(x).powi(2);
        let scale = cfg.alpha2(x).abs();
        let rel = v.abs() / scale;
        (-rel, rel <= 1e-14, format!("x = {x}, residual = {v}"))
    })
}

/// All suites with `trials` trials each.
pub fn run_all_suites(seed: u64, trials: usize, fault: Fault) -> Vec<SuiteReport> {
    vec![
        newton_suite(seed, trials, fault),
        case_split_suite(seed, trials),
        third_order_suite(seed, trials),
        alpha_identity_suite(seed, trials, 2, 12.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_inequality_examples() {
        let c = lemma_newton_inequality(&[1.0, 1.0]).unwrap();
        assert_eq!((c.lhs, c.rhs, c.ok), (2.0, 2.0, true));
        let c = lemma_newton_inequality(&[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(c.rhs, 3.0625);
        assert_eq!(c.lhs, 0.875);
        assert!(lemma_newton_inequality(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn case_split_examples() {
        let c = lemma_case_split(&[1.0, -1.0], 2).unwrap();
        assert_eq!((c.case, c.value, c.bound_ok), (1, -2.0, Some(true)));
        let t = 0.7;
        let c = lemma_case_split(&[t, t, t], 3).unwrap();
        assert_eq!(c.case, 2);
        assert!((c.value - 3.0 * t * t / 2.0).abs() < 1e-15);
        assert!(lemma_case_split(&[1.0], 1).is_err());
    }

    #[test]
    fn third_order_zero_data() {
        let input = ThirdOrderInput {
            g_diag: vec![1.0, 2.0],
            third: vec![vec![Complex64::new(0.0, 0.0); 2]; 2],
            grad: vec![Complex64::new(0.0, 0.0); 2],
            lap: 1.0,
            alpha_prime: 0.1,
        };
        let c = lemma_third_order_bound(&input, 0.0).unwrap();
        assert_eq!((c.lhs, c.rhs, c.ok), (0.0, 0.0, true));
    }

    #[test]
    fn suites_are_deterministic_and_clean() {
        let a = run_all_suites(7, 2000, Fault::None);
        let b = run_all_suites(7, 2000, Fault::None);
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s.violations == 0), "{a:?}");
        let bad = newton_suite(7, 50, Fault::NegateNewton);
        assert!(bad.violations > 0 && bad.counterexample.is_some());
    }
}
