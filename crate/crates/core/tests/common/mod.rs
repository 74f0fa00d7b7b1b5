#![allow(dead_code)]

use std::f64::consts::PI;

use cflow_core::sampling::smooth_field;
use cflow_core::{Background, Field, Grid4, MapField, MetricField, Rank, Section, SpaceForm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TAU: f64 = 2.0 * PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `e^{2φ}δ` with `φ = 0.15 sin(2πx₀) sin(2πx₁)`.
pub fn conformal_bg(grid: Grid4) -> Background {
    let phi = Field::scalar_from_fn(grid, |x| 0.15 * (TAU * x[0]).sin() * (TAU * x[1]).sin()).unwrap();
    Background::new(MetricField::conformally_flat(&phi).unwrap()).unwrap()
}

/// A smooth random conformal factor of amplitude `amp`.
pub fn random_conformal_bg(grid: Grid4, amp: f64, rng: &mut ChaCha8Rng) -> Background {
    let phi = smooth_field(grid, Rank::Scalar, amp, 1, 3, rng).unwrap();
    Background::new(MetricField::conformally_flat(&phi).unwrap()).unwrap()
}

pub fn torus2() -> SpaceForm {
    SpaceForm::torus(vec![1.0, 1.0]).unwrap()
}

pub fn ball2() -> SpaceForm {
    SpaceForm::ball(2, -1.0).unwrap()
}

/// Affine class `x ↦ (x₀, x₂)` plus a smooth random displacement.
pub fn random_torus_map(grid: Grid4, amp: f64, rng: &mut ChaCha8Rng) -> MapField {
    let u = MapField::affine(grid, torus2(), vec![[1, 0, 0, 0], [0, 0, 1, 0]]).unwrap();
    let v = smooth_field(grid, Rank::Target(2), amp, 2, 3, rng).unwrap();
    u.with_disp(v.into_values()).unwrap()
}

/// A smooth random ball map about a random centre with `|u| < 0.65`.
pub fn random_ball_map(grid: Grid4, rng: &mut ChaCha8Rng) -> MapField {
    let c = [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
    let v = smooth_field(grid, Rank::Target(2), 0.25, 2, 3, rng).unwrap();
    let values = v.values().chunks(2).flat_map(|p| [c[0] + p[0], c[1] + p[1]]).collect();
    MapField::new(ball2(), vec![[0; 4]; 2], Field::new(grid, Rank::Target(2), values).unwrap()).unwrap()
}

/// Smooth noise plus a localized bump that excites every mode.
pub fn random_section(grid: Grid4, amp: f64, rng: &mut ChaCha8Rng) -> Section {
    let noise = smooth_field(grid, Rank::Target(2), amp, 2, 4, rng).unwrap();
    let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
    let l = grid.lengths();
    let bump = Field::from_fn(grid, Rank::Target(2), |x, o| {
        let b: f64 = (0..4).map(|i| (0.5 + 0.5 * (TAU * (x[i] / l[i] - c[i])).cos()).powi(4)).product();
        o.fill(amp * b);
    })
    .unwrap();
    let values = noise.values().iter().zip(bump.values()).map(|(a, b)| a + b).collect();
    Section::new(Field::new(grid, Rank::Target(2), values).unwrap()).unwrap()
}

/// Affine class `x ↦ (x₀, x₂)` plus `amp·sin(2πx₁)` in the first component.
pub fn affine_plus_mode(grid: Grid4, amp: f64) -> MapField {
    MapField::from_fn(grid, torus2(), vec![[1, 0, 0, 0], [0, 0, 1, 0]], |x, o| {
        o[0] = amp * (TAU * x[1]).sin();
        o[1] = 0.0;
    })
    .unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
