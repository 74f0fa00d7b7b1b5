//! Seeded random smooth fields for randomized checks.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid4, Rank};

/// Each component is `amplitude/terms · Σ_t a_t cos(2π k_t·x/L + θ_t)` with
/// `a_t ∈ [−1, 1]`, `k_t ∈ [−max_wave, max_wave]⁴ \ {0}` and uniform phases,
/// so `|value| ≤ amplitude` everywhere.
pub fn smooth_field<R: Rng + ?Sized>(
    grid: Grid4,
    rank: Rank,
    amplitude: f64,
    max_wave: i32,
    terms: usize,
    rng: &mut R,
) -> Result<Field> {
    if terms == 0 || max_wave < 1 {
        return Err(Error::InvalidArgument("need at least one term and max_wave >= 1".into()));
    }
    let nc = rank.components();
    let lengths = grid.lengths();
    let mut modes = Vec::with_capacity(nc * terms);
    for _ in 0..nc * terms {
        let k: [f64; 4] = loop {
            let k: [i32; 4] = std::array::from_fn(|_| rng.gen_range(-max_wave..=max_wave));
            if k.iter().any(|&v| v != 0) {
                break std::array::from_fn(|i| 2.0 * PI * k[i] as f64 / lengths[i]);
            }
        };
        let a: f64 = rng.gen_range(-1.0..=1.0);
        let theta: f64 = rng.gen_range(0.0..2.0 * PI);
        modes.push((k, a, theta));
    }
    let scale = amplitude / terms as f64;
    Field::from_fn(grid, rank, |x, out| {
        for (c, o) in out.iter_mut().enumerate() {
            *o = modes[c * terms..(c + 1) * terms]
                .iter()
                .map(|(k, a, th)| a * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + k[3] * x[3] + th).cos())
                .sum::<f64>()
                * scale;
        }
    })
}
