//! Per-node kernels on the rayon pool against the same kernels pinned to one
//! thread. Build with `--no-default-features` for the iterator fallback.

use std::sync::Arc;

use cma_core::grid::{complex_hessian, GridDomain, ScalarField};
use cma_core::rhs::mollify_lift;
use cma_core::solver::log_det_residual;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn fields() -> (ScalarField, ScalarField) {
    let d = Arc::new(GridDomain::ball(2, 13, 1.0).unwrap());
    let u = ScalarField::from_fn(d.clone(), |p| {
        let s: f64 = p.iter().map(|v| v * v).sum();
        s - 1.0 + 0.05 * (p[0] * p[2]).sin()
    })
    .with_boundary(cma_core::grid::Boundary::ZERO);
    let f = ScalarField::from_fn_extended(d, |p| 1.0 + p.iter().map(|v| v * v).sum::<f64>());
    (u, f)
}

fn bench(c: &mut Criterion) {
    let (u, f) = fields();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut g = c.benchmark_group("kernels");
    g.sample_size(10);
    for (name, pinned) in [("pool", false), ("one-thread", true)] {
        let run = |work: &(dyn Fn() + Sync)| {
            if pinned {
                single.install(work)
            } else {
                work()
            }
        };
        g.bench_function(BenchmarkId::new("complex_hessian", name), |b| {
            b.iter(|| run(&|| drop(complex_hessian(&u).unwrap())))
        });
        g.bench_function(BenchmarkId::new("log_det_residual", name), |b| {
            b.iter(|| run(&|| drop(log_det_residual(&u, &f))))
        });
        g.bench_function(BenchmarkId::new("mollify_lift_2h", name), |b| {
            let rho = 2.0 * f.domain().h();
            b.iter(|| run(&|| drop(mollify_lift(&f, 1e-2, rho).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
