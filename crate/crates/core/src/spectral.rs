//! Fourier-space solves for the flat bi-Laplacian.
//!
//! The symbol matches the lattice operators exactly: `D_i` acts on the mode
//! `exp(2πi m·x/L)` as multiplication by `i·sin(2π m_i/n_i)/h_i`, so the
//! composite Laplacian `g^{ij} D_i D_j` with constant `g^{ij}` has symbol
//! `-Σ g^{ij} s_i s_j`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid4};

const IDENTITY: [[f64; 4]; 4] = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];

/// Symbol of `-g^{ij} D_i D_j` at wave index `m`.
pub fn laplacian_symbol(grid: &Grid4, m: [usize; 4], ginv: &[[f64; 4]; 4]) -> f64 {
    let dims = grid.dims();
    let h = grid.spacing();
    let s: [f64; 4] = std::array::from_fn(|i| (2.0 * PI * m[i] as f64 / dims[i] as f64).sin() / h[i]);
    let mut mu = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            mu += ginv[i][j] * s[i] * s[j];
        }
    }
    mu
}

/// Solves `(Id + alpha·Δ₀²) w = rhs` component-wise for the flat Laplacian.
pub fn spectral_solve_bilaplacian(rhs: &Field, alpha: f64) -> Result<Field> {
    let values = solve_bilaplacian(rhs.values(), rhs.components(), rhs.grid(), alpha, &IDENTITY)?;
    Field::new(*rhs.grid(), rhs.rank().clone(), values)
}

/// Same solve for a constant inverse metric `ginv`.
pub(crate) fn solve_bilaplacian(
    rhs: &[f64],
    nc: usize,
    grid: &Grid4,
    alpha: f64,
    ginv: &[[f64; 4]; 4],
) -> Result<Vec<f64>> {
    if rhs.is_empty() || nc == 0 {
        return Err(Error::EmptyField);
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must be non-negative")));
    }
    let nodes = grid.node_count();
    let mut transform = Fft4::new(grid);
    let scale: Vec<f64> = (0..nodes)
        .map(|k| {
            let mu = laplacian_symbol(grid, grid.multi_index(k), ginv);
            1.0 / (1.0 + alpha * mu * mu) / nodes as f64
        })
        .collect();

    let mut out = vec![0.0; rhs.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); nodes];
    for c in 0..nc {
        for k in 0..nodes {
            buf[k] = Complex64::new(rhs[k * nc + c], 0.0);
        }
        transform.forward(&mut buf);
        for (z, s) in buf.iter_mut().zip(&scale) {
            *z *= *s;
        }
        transform.inverse(&mut buf);
        for k in 0..nodes {
            out[k * nc + c] = buf[k].re;
        }
    }
    Ok(out)
}

/// Unnormalized 4-D complex FFT over node-major data.
pub(crate) struct Fft4 {
    grid: Grid4,
    forward: [std::sync::Arc<dyn rustfft::Fft<f64>>; 4],
    inverse: [std::sync::Arc<dyn rustfft::Fft<f64>>; 4],
    line: Vec<Complex64>,
}

impl Fft4 {
    pub fn new(grid: &Grid4) -> Self {
        let mut planner = FftPlanner::new();
        let dims = grid.dims();
        let forward = std::array::from_fn(|i| planner.plan_fft_forward(dims[i]));
        let inverse = std::array::from_fn(|i| planner.plan_fft_inverse(dims[i]));
        let longest = dims.into_iter().max().unwrap_or(0);
        Self { grid: *grid, forward, inverse, line: vec![Complex64::new(0.0, 0.0); longest] }
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        for axis in 0..4 {
            self.pass(data, axis, true);
        }
    }

    pub fn inverse(&mut self, data: &mut [Complex64]) {
        for axis in 0..4 {
            self.pass(data, axis, false);
        }
    }

    fn pass(&mut self, data: &mut [Complex64], axis: usize, forward: bool) {
        let n = self.grid.dims()[axis];
        let s = self.grid.strides()[axis];
        let plan = if forward { &self.forward[axis] } else { &self.inverse[axis] };
        if s == 1 {
            plan.process(data);
            return;
        }
        let block = n * s;
        let line = &mut self.line[..n];
        for base in (0..data.len()).step_by(block) {
            for inner in 0..s {
                for m in 0..n {
                    line[m] = data[base + m * s + inner];
                }
                plan.process(line);
                for m in 0..n {
                    data[base + m * s + inner] = line[m];
                }
            }
        }
    }
}
