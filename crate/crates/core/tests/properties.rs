use std::sync::Arc;

use cma_core::estimate::lemma_newton_inequality;
use cma_core::grid::{complex_laplacian, snapshot, GridDomain, HMat, ScalarField};
use cma_core::kahler::{obc_check, sample_points, MetricModel};
use cma_core::rhs::{mollify_lift, MollifierKernel};
use num_complex::Complex64;
use proptest::prelude::*;

fn torus(m: usize, n: usize) -> Arc<GridDomain> {
    Arc::new(GridDomain::torus(m, n, 1.0).unwrap())
}

/// Smooth-ish positive field from a handful of Fourier coefficients.
fn trig_field(d: &Arc<GridDomain>, c: &[f64]) -> ScalarField {
    let c = c.to_vec();
    ScalarField::from_fn(d.clone(), move |p| {
        let t = std::f64::consts::TAU;
        2.0 + c[0] * (t * p[0]).sin() + c[1] * (t * p[1]).cos() + c[2] * (t * (p[0] + p[1])).sin()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lift_is_bounded_below_and_monotone_in_eps(
        c in prop::collection::vec(-0.6f64..0.6, 3),
        e1 in 1e-4f64..1e-1,
        k in 1.1f64..10.0,
    ) {
        let d = Arc::new(GridDomain::ball(1, 9, 1.0).unwrap());
        let f = trig_field(&d, &c).map(|v| (v - 2.0).max(0.0));
        let rho = 2.0 * d.h();
        let lo = mollify_lift(&f, e1, rho).unwrap();
        let hi = mollify_lift(&f, e1 * k, rho).unwrap();
        for i in 0..d.num_nodes() {
            prop_assert!(lo.get(i) >= e1);
            prop_assert!(lo.get(i) < hi.get(i));
        }
    }

    #[test]
    fn torus_convolution_preserves_mass_and_commutes_with_the_laplacian(
        c in prop::collection::vec(-0.9f64..0.9, 3),
        r in 1.0f64..3.0,
    ) {
        let d = torus(1, 16);
        let g = trig_field(&d, &c);
        let k = MollifierKernel::new(d.axes(), d.h(), r * d.h()).unwrap();
        let s = k.convolve(&g);
        let mean = |f: &ScalarField| f.values().iter().sum::<f64>() / f.values().len() as f64;
        prop_assert!((mean(&s) - mean(&g)).abs() < 1e-10);
        let a = complex_laplacian(&s).unwrap();
        let b = k.convolve(&complex_laplacian(&g).unwrap());
        for i in 0..d.num_nodes() {
            prop_assert!((a.get(i) - b.get(i)).abs() < 1e-10 * (1.0 + a.get(i).abs()));
        }
    }

    #[test]
    fn newton_type_inequality_holds(b in prop::collection::vec(1e-3f64..1e3, 2..5)) {
        let c = lemma_newton_inequality(&b).unwrap();
        prop_assert!(c.ok, "{b:?} {c:?}");
    }

    #[test]
    fn hermitian_inverse_and_eigh(a in 0.1f64..5.0, d in 0.1f64..5.0, re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let b = Complex64::new(re, im);
        prop_assume!(a * d - b.norm_sqr() > 1e-3);
        let h = HMat::from_upper(2, &[Complex64::new(a, 0.0), b, b.conj(), Complex64::new(d, 0.0)]);
        let w = h.inverse().unwrap();
        prop_assert!((h.trace_product(&w) - 2.0).norm() < 1e-10);
        prop_assert!((h.det() * w.det() - 1.0).abs() < 1e-10);
        let (lam, u) = h.eigh();
        for i in 0..2 {
            for j in 0..2 {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..2 {
                    s += u[i][k] * lam[k] * u[j][k].conj();
                }
                prop_assert!((s - h.get(i, j)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn snapshots_round_trip(c in prop::collection::vec(-1.0f64..1.0, 3)) {
        let d = Arc::new(GridDomain::ball(1, 9, 0.7).unwrap());
        let f = trig_field(&d, &c);
        let back = snapshot::from_csv(&snapshot::to_csv(&f)).unwrap();
        prop_assert_eq!(back.values(), f.values());
    }
}

#[test]
fn more_frames_never_raise_obc_min() {
    for metric in [MetricModel::FubiniStudy { m: 2 }, MetricModel::PoincareDisk { m: 2 }] {
        let pts = sample_points(&metric, 4, 11);
        let mut last = f64::INFINITY;
        for frames in [1, 5, 25, 125] {
            let r = obc_check(&metric, &pts, frames, 11).unwrap();
            assert!(r.obc_min <= last);
            last = r.obc_min;
        }
    }
}
