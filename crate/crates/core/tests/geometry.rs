use std::f64::consts::PI;

use cflow_core::geometry::{bianchi_defect, christoffels, conformal_metric, curvature, q_total, yamabe_quotient};
use cflow_core::sampling::smooth_field;
use cflow_core::{Background, Field, Grid4, MetricField, Rank};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TAU: f64 = 2.0 * PI;

/// `φ` varies along axes 0 and 1 only.
fn phi(x: [f64; 4]) -> f64 {
    0.15 * (TAU * x[0]).sin() * (TAU * x[1]).sin() + 0.1 * (TAU * x[1]).cos()
}

fn dphi(x: [f64; 4]) -> [f64; 4] {
    [
        0.15 * TAU * (TAU * x[0]).cos() * (TAU * x[1]).sin(),
        0.15 * TAU * (TAU * x[0]).sin() * (TAU * x[1]).cos() - 0.1 * TAU * (TAU * x[1]).sin(),
        0.0,
        0.0,
    ]
}

fn lap_phi(x: [f64; 4]) -> f64 {
    -2.0 * TAU * TAU * 0.15 * (TAU * x[0]).sin() * (TAU * x[1]).sin() - TAU * TAU * 0.1 * (TAU * x[1]).cos()
}

/// `S = −6e^{−2φ}(Δφ + |∇φ|²)` for `e^{2φ}δ` in dimension 4.
fn scalar_closed_form(x: [f64; 4]) -> f64 {
    let d = dphi(x);
    -6.0 * (-2.0 * phi(x)).exp() * (lap_phi(x) + d.iter().map(|v| v * v).sum::<f64>())
}

fn conformal_background(n: usize) -> (Grid4, MetricField) {
    let grid = Grid4::new([n, n, 8, 8], [1.0; 4]).unwrap();
    let f = Field::scalar_from_fn(grid, phi).unwrap();
    (grid, MetricField::conformally_flat(&f).unwrap())
}

fn christoffel_error(n: usize) -> f64 {
    let (grid, metric) = conformal_background(n);
    let gamma = christoffels(&metric).unwrap();
    let mut worst: f64 = 0.0;
    for idx in 0..grid.node_count() {
        let d = dphi(grid.coords(idx));
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    let delta = |a: usize, b: usize| f64::from(u8::from(a == b));
                    let want = delta(k, i) * d[j] + delta(k, j) * d[i] - delta(i, j) * d[k];
                    worst = worst.max((gamma.get(idx, k, i, j) - want).abs());
                }
            }
        }
    }
    worst
}

fn scalar_error(n: usize) -> f64 {
    let (grid, metric) = conformal_background(n);
    let c = curvature(&metric).unwrap();
    (0..grid.node_count())
        .map(|k| (c.scal.values()[k] - scalar_closed_form(grid.coords(k))).abs())
        .fold(0.0, f64::max)
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

#[test]
fn conformal_christoffels_converge_at_second_order() {
    let (a, b) = (christoffel_error(16), christoffel_error(32));
    assert!(order(a, b) >= 1.9, "errors {a} {b}");
}

#[test]
fn scalar_curvature_converges_at_second_order() {
    let (a, b) = (scalar_error(16), scalar_error(32));
    assert!(order(a, b) >= 1.9, "errors {a} {b}");
}

#[test]
fn contracted_bianchi_defect_decays() {
    let defect = |n| bianchi_defect(&Background::new(conformal_background(n).1).unwrap());
    let (a, b) = (defect(16), defect(32));
    assert!(order(a, b) >= 1.5, "defects {a} {b}");
}

#[test]
fn kappa_invariance_defect_decays_at_second_order() {
    // κ of the flat metric is exactly 0, so |κ(e^{2φ}δ)| is the invariance defect
    let kappa = |n| q_total(&Background::new(conformal_background(n).1).unwrap()).abs();
    let (a, b) = (kappa(16), kappa(32));
    assert!(order(a, b) >= 1.8, "defects {a} {b}");
}

fn yamabe_quotient_error(n: usize) -> f64 {
    let (grid, metric) = conformal_background(n);
    let bg = Background::new(metric).unwrap();
    let cell = grid.cell_volume();
    let (mut s_int, mut vol) = (0.0, 0.0);
    for k in 0..grid.node_count() {
        let x = grid.coords(k);
        let w = (4.0 * phi(x)).exp() * cell;
        s_int += scalar_closed_form(x) * w;
        vol += w;
    }
    (yamabe_quotient(&bg) - s_int / vol.sqrt()).abs() / (s_int / vol.sqrt()).abs()
}

#[test]
fn yamabe_quotient_matches_closed_form_quadrature() {
    let (a, b) = (yamabe_quotient_error(16), yamabe_quotient_error(32));
    assert!(order(a, b) >= 1.8, "relative errors {a} {b}");
    assert!(b <= 2e-2, "relative error {b}");
}

#[test]
fn riemann_antisymmetries() {
    let (_, metric) = conformal_background(16);
    let c = curvature(&metric).unwrap();
    let scale = c.max_riemann();
    assert!(c.pair_antisymmetry_defect(&metric) <= 2e-2 * scale);
    let idx = 123;
    for k in 0..4 {
        for l in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(c.riemann(idx, k, l, i, j), -c.riemann(idx, k, l, j, i));
                }
            }
        }
    }
}

#[test]
fn constant_rescaling_of_flat_metric_is_flat() {
    let grid = Grid4::cubic(8, 1.0).unwrap();
    for c in [-0.7, 0.1, 2.0] {
        let phi = Field::scalar_from_fn(grid, |_| c).unwrap();
        let m = conformal_metric(&phi, &MetricField::flat(grid)).unwrap();
        assert!((m.vol().values()[0] - (4.0 * c).exp()).abs() <= 1e-12 * (4.0 * c).exp());
        let bg = Background::new(m).unwrap();
        assert!(bg.curvature().max_riemann() <= 1e-10);
        assert!(yamabe_quotient(&bg).abs() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn scalar_is_ricci_trace_pointwise(seed in any::<u64>()) {
        let grid = Grid4::cubic(8, 1.0).unwrap();
        let phi = smooth_field(grid, Rank::Scalar, 0.3, 2, 3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let metric = MetricField::conformally_flat(&phi).unwrap();
        let c = curvature(&metric).unwrap();
        prop_assert!(c.trace_defect(&metric) <= 1e-12 * (1.0 + c.scal.max_abs()));
        prop_assert!(metric.inverse_defect() <= 1e-12);
    }

    #[test]
    fn conformal_change_stays_positive_definite(seed in any::<u64>(), amp in 0.0f64..3.0) {
        let grid = Grid4::cubic(8, 1.0).unwrap();
        let phi = smooth_field(grid, Rank::Scalar, amp, 2, 3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let m = MetricField::conformally_flat(&phi).unwrap();
        prop_assert!(m.vol().values().iter().all(|v| *v > 0.0));
    }
}
