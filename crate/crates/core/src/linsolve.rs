//! Sparse linear algebra for the Newton steps.
//!
//! Systems are assembled row by row into [`Csr`]. [`LinearSolver`] keeps the
//! last sparse LU factorization around and uses it as a right preconditioner
//! for restarted GMRES on later systems with the same pattern; the matrix is
//! refactored only when GMRES stalls. Jacobians change slowly between Newton
//! iterations and between continuation stages, so one factorization usually
//! serves many solves.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};
use crate::par;

/// Compressed sparse rows with sorted, merged column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// Builds from per-row `(column, value)` lists; duplicates are summed in
    /// the order given.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let start = cols.len();
            for (c, v) in row {
                assert!(c < ncols, "column {c} out of range");
                if cols.len() > start && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Csr { ncols, row_ptr, cols, vals }
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        par::map_range(self.nrows(), |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
        })
    }

    fn same_pattern(&self, other: &Csr) -> bool {
        self.ncols == other.ncols && self.row_ptr == other.row_ptr && self.cols == other.cols
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                trip.push(Triplet::new(i, j, a));
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows(), self.ncols, &trip)
            .map_err(|e| Error::LinearSolve(format!("assembly: {e:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOptions {
    pub restart: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for LinearOptions {
    fn default() -> Self {
        LinearOptions { restart: 60, max_iter: 120, rel_tol: 1e-11 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinearStats {
    pub factorizations: usize,
    pub solves: usize,
    pub gmres_iterations: usize,
}

/// Result of a GMRES run.
#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    par::pairwise_sum(&prods)
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Restarted GMRES for `A x = b` with right preconditioner `precond ≈ A^{-1}`,
/// starting from `x0`.
pub fn gmres<P>(a: &Csr, b: &[f64], x0: Vec<f64>, precond: P, opts: &LinearOptions) -> GmresOutcome
where
    P: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return GmresOutcome { x: vec![0.0; n], iterations: 0, rel_residual: 0.0, converged: true };
    }
    let target = opts.rel_tol * bnorm;
    let mut x = x0;
    let mut iterations = 0;
    let mut rel = f64::INFINITY;
    while iterations < opts.max_iter {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        rel = beta / bnorm;
        if beta <= target {
            return GmresOutcome { x, iterations, rel_residual: rel, converged: true };
        }
        let k_max = opts.restart.min(opts.max_iter - iterations);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(k_max);
        let mut hess = vec![vec![0.0; k_max]; k_max + 1];
        let (mut cs, mut sn) = (vec![0.0; k_max], vec![0.0; k_max]);
        let mut g = vec![0.0; k_max + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..k_max {
            let zk = precond(&v[k]);
            let mut w = a.matvec(&zk);
            z.push(zk);
            for (i, vi) in v.iter().enumerate() {
                let hik = dot(&w, vi);
                hess[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(vi) {
                    *wj -= hik * vj;
                }
            }
            let hn = norm(&w);
            hess[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let den = hess[k][k].hypot(hess[k + 1][k]);
            if den == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = hess[k][k] / den;
            sn[k] = hess[k + 1][k] / den;
            hess[k][k] = den;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k_used = k + 1;
            if g[k + 1].abs() <= target || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in (i + 1)..k_used {
                s -= hess[i][j] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            for (xj, zj) in x.iter_mut().zip(zi) {
                *xj += yi * zj;
            }
        }
        if k_used == 0 {
            break;
        }
    }
    let ax = a.matvec(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let rn = norm(&r);
    if rn <= target {
        rel = rn / bnorm;
        return GmresOutcome { x, iterations, rel_residual: rel, converged: true };
    }
    rel = rel.min(rn / bnorm);
    GmresOutcome { x, iterations, rel_residual: rel, converged: false }
}

/// Sparse LU of one matrix.
#[derive(Debug, Clone)]
pub struct Factorization {
    lu: Lu<usize, f64>,
}

impl Factorization {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }
}

/// Sparse solver that reuses its last factorization as a GMRES preconditioner.
#[derive(Debug, Default)]
pub struct LinearSolver {
    opts: LinearOptions,
    pattern: Option<Csr>,
    symbolic: Option<SymbolicLu<usize>>,
    factor: Option<Factorization>,
    stats: LinearStats,
}

impl LinearSolver {
    pub fn new(opts: LinearOptions) -> Self {
        LinearSolver { opts, ..Default::default() }
    }

    pub fn stats(&self) -> LinearStats {
        self.stats
    }

    /// Drops the cached factorization.
    pub fn invalidate(&mut self) {
        self.factor = None;
    }

    pub fn factor(&mut self, a: &Csr) -> Result<()> {
        let mat = a.to_faer()?;
        let reuse = self.pattern.as_ref().is_some_and(|p| p.same_pattern(a));
        if !reuse {
            let sym = SymbolicLu::try_new(mat.symbolic())
                .map_err(|e| Error::LinearSolve(format!("symbolic factorization: {e:?}")))?;
            self.symbolic = Some(sym);
            self.pattern = Some(Csr { vals: Vec::new(), ..a.clone() });
        }
        let sym = self.symbolic.clone().expect("symbolic factorization present");
        let lu = Lu::try_new_with_symbolic(sym, mat.as_ref())
            .map_err(|e| Error::LinearSolve(format!("numeric factorization: {e:?}")))?;
        self.factor = Some(Factorization { lu });
        self.stats.factorizations += 1;
        Ok(())
    }

    /// Solves `a x = b` to the configured relative tolerance.
    pub fn solve(&mut self, a: &Csr, b: &[f64]) -> Result<Vec<f64>> {
        self.stats.solves += 1;
        let compatible = self.pattern.as_ref().is_some_and(|p| p.same_pattern(a));
        if let (Some(fact), true) = (&self.factor, compatible) {
            let out = gmres(a, b, vec![0.0; b.len()], |r| fact.solve(r), &self.opts);
            self.stats.gmres_iterations += out.iterations;
            if out.converged {
                return Ok(out.x);
            }
        }
        self.factor(a)?;
        let fact = self.factor.as_ref().expect("just factored");
        let out = gmres(a, b, vec![0.0; b.len()], |r| fact.solve(r), &self.opts);
        self.stats.gmres_iterations += out.iterations;
        if !out.converged {
            return Err(Error::LinearSolve(format!(
                "GMRES with a fresh factorization stalled at relative residual {:e}",
                out.rel_residual
            )));
        }
        Ok(out.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize, shift: f64) -> Csr {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, -2.0 - shift)];
                if i > 0 {
                    r.push((i - 1, 1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, 1.0));
                }
                r
            })
            .collect();
        Csr::from_rows(n, rows)
    }

    #[test]
    fn duplicates_are_merged() {
        let a = Csr::from_rows(3, vec![vec![(2, 1.0), (0, 1.0), (2, 2.0)]]);
        assert_eq!(a.row(0), (&[0usize, 2][..], &[1.0, 3.0][..]));
    }

    #[test]
    fn unpreconditioned_gmres_solves_small_system() {
        let a = laplace_1d(30, 0.1);
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let out = gmres(&a, &b, vec![0.0; 30], |r| r.to_vec(), &LinearOptions { restart: 40, max_iter: 200, rel_tol: 1e-12 });
        assert!(out.converged);
        let r = a.matvec(&out.x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-9);
        }
    }

    #[test]
    fn cached_factorization_is_reused_for_nearby_matrices() {
        let mut s = LinearSolver::new(LinearOptions::default());
        let b: Vec<f64> = (0..200).map(|i| 1.0 + (i % 5) as f64).collect();
        let x1 = s.solve(&laplace_1d(200, 0.01), &b).unwrap();
        let a2 = laplace_1d(200, 0.011);
        let x2 = s.solve(&a2, &b).unwrap();
        assert_eq!(s.stats().factorizations, 1);
        assert_eq!(s.stats().solves, 2);
        let r = a2.matvec(&x2);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-8 * bi.abs().max(1.0));
        }
        assert!(x1.iter().zip(&x2).any(|(a, b)| a != b));
    }
}
