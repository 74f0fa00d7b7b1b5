mod common;

use cflow_core::energy::{c_harmonic_operator, conformal_energy, gradient_check};
use cflow_core::flow::{
    explicit_dt, lemma_bounds, run_flow, step_explicit, step_imex, ExitReason, FlowConfig, Integrator, StepPolicy,
};
use cflow_core::{Background, Error, Grid4, MapField};
use common::*;

/// `amp·∏ sin(2πk x_i)` in the first component of a torus map with zero class.
fn product_mode(grid: Grid4, k: f64, amp: f64) -> MapField {
    MapField::from_fn(grid, torus2(), vec![[0; 4]; 2], |x, o| {
        o[0] = amp * x.iter().map(|v| (TAU * k * v).sin()).product::<f64>();
        o[1] = 0.0;
    })
    .unwrap()
}

/// Minimal-image values of the first component.
fn first_component(u: &MapField) -> Vec<f64> {
    u.disp().values().chunks(2).map(|p| if p[0] >= 0.5 { p[0] - 1.0 } else { p[0] }).collect()
}

/// `λ = Σ_i (sin(2πk h)/h)²`, the flat symbol of the mode.
fn symbol(grid: Grid4, k: f64) -> f64 {
    grid.spacing().iter().map(|h| ((TAU * k * h).sin() / h).powi(2)).sum()
}

#[test]
fn euler_step_scales_a_mode_by_the_symbol() {
    let grid = Grid4::cubic(8, 1.0).unwrap();
    let bg = Background::flat(grid);
    let amp = 0.01;
    let u = product_mode(grid, 1.0, amp);
    let lam = symbol(grid, 1.0);
    let dt = explicit_dt(&bg, 0.4);
    let next = step_explicit(&u, &bg, dt, Integrator::Euler, None).unwrap();
    let factor = 1.0 - dt * lam * lam;
    let want: Vec<f64> = first_component(&u).iter().map(|v| v * factor).collect();
    assert!(max_diff(&first_component(&next), &want) <= 1e-14);
}

#[test]
fn explicit_euler_is_stable_at_the_cfl_limit() {
    let n = 16;
    let grid = Grid4::cubic(n, 1.0).unwrap();
    let bg = Background::flat(grid);
    // k = n/4 maximizes the symbol of the doubled central difference
    let fastest = product_mode(grid, n as f64 / 4.0, 0.01);
    let noise = random_section(grid, 0.01, &mut rng(1));
    let mut u = fastest.perturbed(&noise, 1.0).unwrap();
    let dt = explicit_dt(&bg, 0.4);
    let start = first_component(&u).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 0..10_000 {
        u = step_explicit(&u, &bg, dt, Integrator::Euler, None).unwrap();
    }
    let end = first_component(&u).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(end.is_finite() && end <= start, "{start} -> {end}");
}

#[test]
fn imex_step_damps_a_mode_by_the_resolvent() {
    let grid = Grid4::cubic(8, 1.0).unwrap();
    let bg = Background::flat(grid);
    let u = product_mode(grid, 1.0, 0.01);
    let lam = symbol(grid, 1.0);
    let dt = 1e-3;
    let next = step_imex(&u, &bg, dt, None).unwrap();
    let want: Vec<f64> = first_component(&u).iter().map(|v| v / (1.0 + dt * lam * lam)).collect();
    assert!(max_diff(&first_component(&next), &want) <= 1e-10);
}

#[test]
fn imex_is_stable_far_beyond_the_explicit_limit() {
    let grid = Grid4::cubic(16, 1.0).unwrap();
    let bg = Background::flat(grid);
    let dt = 10.0 * explicit_dt(&bg, 1.0);
    let mut u = random_torus_map(grid, 0.05, &mut rng(2));
    let e0 = conformal_energy(&u, &bg).unwrap();
    let mut energy = e0;
    for _ in 0..100 {
        u = step_imex(&u, &bg, dt, None).unwrap();
        let e = conformal_energy(&u, &bg).unwrap();
        // rounding noise once the energy has decayed to the floor
        assert!(e.is_finite() && e <= energy + 1e-20 * e0, "{energy} -> {e}");
        energy = e;
    }
    assert!(energy <= 1e-6 * e0);
}

#[test]
fn imex_requires_a_constant_metric() {
    let grid = Grid4::cubic(8, 1.0).unwrap();
    let u = random_torus_map(grid, 0.05, &mut rng(3));
    assert!(matches!(step_imex(&u, &conformal_bg(grid), 1e-4, None), Err(Error::Unsupported(_))));
}

#[test]
fn critical_maps_are_fixed_points() {
    let grid = Grid4::cubic(8, 1.0).unwrap();
    let bg = Background::flat(grid);
    let u = MapField::affine(grid, torus2(), vec![[1, 0, 0, 0], [0, 1, 1, 0]]).unwrap();
    let dt = explicit_dt(&bg, 0.4);
    for integrator in [Integrator::Euler, Integrator::Rk4] {
        let v = step_explicit(&u, &bg, dt, integrator, None).unwrap();
        assert!(v.disp_distance(&u).unwrap() <= 1e-14);
    }
    assert!(step_imex(&u, &bg, 1.0, None).unwrap().disp_distance(&u).unwrap() <= 1e-14);
    let cfg = FlowConfig { max_steps: Some(5), ..FlowConfig::default() };
    assert_eq!(run_flow(u, &bg, &cfg).unwrap().reason, ExitReason::Converged);
}

fn max_identity_residual(integrator: Integrator, cfl: f64, t_max: f64) -> f64 {
    let grid = Grid4::cubic(8, 1.0).unwrap();
    let bg = conformal_bg(grid);
    let u = random_ball_map(grid, &mut rng(4));
    let cfg = FlowConfig {
        policy: StepPolicy::Explicit { cfl, integrator },
        t_max,
        grad_tol: 1e-300,
        monitor_every: 1,
        ..FlowConfig::default()
    };
    let out = run_flow(u, &bg, &cfg).unwrap();
    assert_eq!(out.reason, ExitReason::TimeUp);
    out.state.history.iter().map(|r| r.identity_residual).fold(0.0, f64::max)
}

#[test]
fn identity_residual_shrinks_with_the_integrator_order() {
    let grid = Grid4::cubic(8, 1.0).unwrap();
    let t_max = 40.0 * explicit_dt(&conformal_bg(grid), 0.4);
    let order = |integrator| {
        let a = max_identity_residual(integrator, 0.4, t_max);
        let b = max_identity_residual(integrator, 0.2, t_max);
        ((a / b).log2(), a, b)
    };
    let (p, a, b) = order(Integrator::Euler);
    assert!(p >= 0.9, "Euler: {a} {b}");
    let (p, a, b) = order(Integrator::Rk4);
    assert!(p >= 1.8, "RK4: {a} {b}");
}

#[test]
fn flow_on_a_conformal_metric_dissipates_energy() {
    let grid = Grid4::cubic(8, 1.0).unwrap();
    let bg = conformal_bg(grid);
    let u = random_ball_map(grid, &mut rng(5));
    let cfg = FlowConfig { max_steps: Some(200), t_max: 1e9, grad_tol: 1e-300, monitor_every: 5, ..FlowConfig::default() };
    let out = run_flow(u.clone(), &bg, &cfg).unwrap();
    let h = &out.state.history;
    assert!(h.windows(2).all(|w| w[1].energy < w[0].energy));
    assert!(h.iter().all(|r| r.identity_residual <= 1e-2));
    assert_eq!(out.state.u.linear_part(), u.linear_part());
    let bounds = lemma_bounds(h);
    assert!(bounds.dirichlet_plus_dissipation.is_finite() && bounds.hessian.is_finite() && bounds.quartic.is_finite());
}

#[test]
fn converged_flow_is_critical() {
    let grid = Grid4::cubic(8, 1.0).unwrap();
    let bg = Background::flat(grid);
    let u0 = affine_plus_mode(grid, 0.05);
    let cfg = FlowConfig { max_steps: Some(5000), monitor_every: 20, ..FlowConfig::default() };
    let out = run_flow(u0.clone(), &bg, &cfg).unwrap();
    assert_eq!(out.reason, ExitReason::Converged);
    let v = random_section(grid, 0.1, &mut rng(6));
    let before = gradient_check(&u0, &bg, &v, 1e-4).unwrap().difference_quotient.abs();
    let after = gradient_check(&out.state.u, &bg, &v, 1e-4).unwrap().difference_quotient.abs();
    assert!(after <= 1e-3 * before, "{before} -> {after}");
    assert!(c_harmonic_operator(&out.state.u, &bg).unwrap().max_abs() < 1e-6);
    let affine = MapField::affine(grid, torus2(), u0.linear_part().to_vec()).unwrap();
    assert!(out.state.u.disp_distance(&affine).unwrap() <= 1e-4);
    let bounds = lemma_bounds(&out.state.history);
    assert!(bounds.hessian_tail_nonincreasing && bounds.quartic_tail_nonincreasing);
}

#[test]
fn invalid_configs_are_rejected() {
    let grid = Grid4::cubic(8, 1.0).unwrap();
    let u = random_torus_map(grid, 0.05, &mut rng(7));
    let bg = Background::flat(grid);
    for cfg in [
        FlowConfig { policy: StepPolicy::Explicit { cfl: 1.5, integrator: Integrator::Rk4 }, ..FlowConfig::default() },
        FlowConfig { policy: StepPolicy::Imex { dt: 0.0 }, ..FlowConfig::default() },
        FlowConfig { t_max: -1.0, ..FlowConfig::default() },
        FlowConfig { monitor_every: 0, ..FlowConfig::default() },
    ] {
        assert!(matches!(run_flow(u.clone(), &bg, &cfg), Err(Error::InvalidFlowConfig(_))));
    }
}
