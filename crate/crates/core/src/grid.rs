//! Periodic 4-D lattice, node-major fields and central-difference calculus.
//!
//! Nodes are stored row-major with axis 3 fastest; a field with `c`
//! components stores node `k`, component `j` at `values[k * c + j]`.
//! All difference operators are second-order central stencils with periodic
//! wraparound. The second derivative along an axis is the composition of two
//! first-difference stencils, so every discrete Hessian is symmetric and the
//! difference operators commute exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of nodes per axis.
pub const MIN_NODES_PER_AXIS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid4 {
    dims: [usize; 4],
    lengths: [f64; 4],
}

impl Grid4 {
    pub fn new(dims: [usize; 4], lengths: [f64; 4]) -> Result<Self> {
        for (axis, (&n, &l)) in dims.iter().zip(lengths.iter()).enumerate() {
            if n < MIN_NODES_PER_AXIS || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "dims[{axis}] = {n}: need an even count >= {MIN_NODES_PER_AXIS}"
                )));
            }
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "lengths[{axis}] = {l}: must be positive and finite"
                )));
            }
        }
        Ok(Self { dims, lengths })
    }

    /// `n` nodes per axis, period `length` per axis.
    pub fn cubic(n: usize, length: f64) -> Result<Self> {
        Self::new([n; 4], [length; 4])
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn lengths(&self) -> [f64; 4] {
        self.lengths
    }

    pub fn spacing(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.lengths[i] / self.dims[i] as f64)
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn min_length(&self) -> f64 {
        self.lengths.into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn node_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Volume of one lattice cell, the flat quadrature weight.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    /// Node strides per axis (axis 3 fastest).
    pub fn strides(&self) -> [usize; 4] {
        let [_, n1, n2, n3] = self.dims;
        [n1 * n2 * n3, n2 * n3, n3, 1]
    }

    pub fn index(&self, m: [usize; 4]) -> usize {
        let s = self.strides();
        (0..4).map(|i| (m[i] % self.dims[i]) * s[i]).sum()
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 4] {
        let s = self.strides();
        std::array::from_fn(|i| (idx / s[i]) % self.dims[i])
    }

    /// Coordinates of a node, `x_i = m_i * h_i` in `[0, L_i)`.
    pub fn coords(&self, idx: usize) -> [f64; 4] {
        let m = self.multi_index(idx);
        let h = self.spacing();
        std::array::from_fn(|i| m[i] as f64 * h[i])
    }

    /// Index of the node `offset` cells away along `axis`, with wraparound.
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let n = self.dims[axis] as isize;
        let s = self.strides()[axis];
        let m = ((idx / s) % self.dims[axis]) as isize;
        let target = (m + offset).rem_euclid(n);
        (idx as isize + (target - m) * s as isize) as usize
    }

    /// Minimal-image displacement `x - center` on the flat torus.
    pub fn torus_displacement(&self, x: [f64; 4], center: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| {
            let l = self.lengths[i];
            let d = x[i] - center[i];
            d - l * (d / l).round()
        })
    }
}

/// Component layout of a field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rank {
    Scalar,
    /// A 4-vector or 1-form on M.
    Vector,
    /// Symmetric 2-tensor on M, 10 components in [`SYM_PAIRS`] order.
    SymTensor,
    /// A vector of chart components in the n-dimensional target.
    Target(usize),
    /// Dense multi-index block, e.g. `[4, n]` for a pullback 1-form.
    Mixed(Vec<usize>),
}

impl Rank {
    pub fn components(&self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => 4,
            Rank::SymTensor => 10,
            Rank::Target(n) => *n,
            Rank::Mixed(shape) => shape.iter().product(),
        }
    }
}

impl std::fmt::Display for Rank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rank::Scalar => write!(f, "scalar"),
            Rank::Vector => write!(f, "vector"),
            Rank::SymTensor => write!(f, "sym_tensor"),
            Rank::Target(n) => write!(f, "target({n})"),
            Rank::Mixed(shape) => write!(f, "mixed({shape:?})"),
        }
    }
}

/// Upper-triangle index pairs of a symmetric 4x4 tensor, in storage order.
pub const SYM_PAIRS: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

/// Storage slot of the symmetric pair `(i, j)`.
pub const SYM_INDEX: [[usize; 4]; 4] = [[0, 1, 2, 3], [1, 4, 5, 6], [2, 5, 7, 8], [3, 6, 8, 9]];

/// Values on every node of a [`Grid4`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid4,
    rank: Rank,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid4, rank: Rank, values: Vec<f64>) -> Result<Self> {
        let nc = rank.components();
        if nc == 0 {
            return Err(Error::EmptyField);
        }
        let expected = grid.node_count() * nc;
        if values.len() != expected {
            return Err(Error::LengthMismatch { expected, found: values.len() });
        }
        check_finite(&values, nc, "field")?;
        Ok(Self { grid, rank, values })
    }

    pub(crate) fn from_parts_unchecked(grid: Grid4, rank: Rank, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count() * rank.components());
        Self { grid, rank, values }
    }

    pub fn zeros(grid: Grid4, rank: Rank) -> Self {
        let len = grid.node_count() * rank.components();
        Self { grid, rank, values: vec![0.0; len] }
    }

    pub fn constant(grid: Grid4, rank: Rank, value: &[f64]) -> Result<Self> {
        let nc = rank.components();
        if value.len() != nc {
            return Err(Error::LengthMismatch { expected: nc, found: value.len() });
        }
        let values = value.iter().copied().cycle().take(grid.node_count() * nc).collect();
        Self::new(grid, rank, values)
    }

    /// Fills each node from its coordinates; `f` writes the node's components.
    pub fn from_fn(grid: Grid4, rank: Rank, f: impl Fn([f64; 4], &mut [f64]) + Sync) -> Result<Self> {
        let nc = rank.components();
        let mut values = vec![0.0; grid.node_count() * nc];
        values
            .par_chunks_mut(nc)
            .enumerate()
            .for_each(|(idx, out)| f(grid.coords(idx), out));
        Self::new(grid, rank, values)
    }

    pub fn scalar_from_fn(grid: Grid4, f: impl Fn([f64; 4]) -> f64 + Sync) -> Result<Self> {
        Self::from_fn(grid, Rank::Scalar, |x, out| out[0] = f(x))
    }

    pub fn grid(&self) -> &Grid4 {
        &self.grid
    }

    pub fn rank(&self) -> &Rank {
        &self.rank
    }

    pub fn components(&self) -> usize {
        self.rank.components()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn node(&self, idx: usize) -> &[f64] {
        let nc = self.components();
        &self.values[idx * nc..(idx + 1) * nc]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn expect_rank(&self, rank: &Rank) -> Result<()> {
        if &self.rank != rank {
            return Err(Error::RankMismatch { expected: rank.to_string(), found: self.rank.to_string() });
        }
        Ok(())
    }
}

pub(crate) fn check_finite(values: &[f64], nc: usize, what: &'static str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(Error::NonFinite { what, node: pos / nc }),
        None => Ok(()),
    }
}

/// Central difference of `f` along `axis`: order 1 is `D_axis`, order 2 is
/// `D_axis ∘ D_axis`. The result has the same rank as `f`.
pub fn diff(f: &Field, axis: usize, order: usize) -> Result<Field> {
    if axis >= 4 {
        return Err(Error::AxisOutOfRange(axis));
    }
    check_finite(&f.values, f.components(), "diff input")?;
    let values = match order {
        1 => stencil::d1(&f.values, f.components(), &f.grid, axis),
        2 => stencil::d2(&f.values, f.components(), &f.grid, axis),
        other => return Err(Error::UnsupportedOrder(other)),
    };
    Ok(Field::from_parts_unchecked(f.grid, f.rank.clone(), values))
}

/// Quadrature `Σ f·vol·∏h` over all nodes.
pub fn integrate(f: &Field, vol: &Field) -> Result<f64> {
    f.expect_rank(&Rank::Scalar)?;
    vol.expect_rank(&Rank::Scalar)?;
    if f.grid != vol.grid {
        return Err(Error::GridMismatch);
    }
    if let Some((node, &value)) = vol.values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveVolume { node, value });
    }
    let cell = f.grid.cell_volume();
    Ok(sum_by(f.values.len(), |i| f.values[i] * vol.values[i]) * cell)
}

/// Deterministic pairwise sum of `term(0..len)`.
///
/// The split points depend only on `len`, so the result is bit-reproducible
/// regardless of how rayon schedules the halves.
pub fn sum_by<F: Fn(usize) -> f64 + Sync>(len: usize, term: F) -> f64 {
    fn rec<F: Fn(usize) -> f64 + Sync>(lo: usize, hi: usize, term: &F) -> f64 {
        let n = hi - lo;
        if n <= 256 {
            return (lo..hi).map(term).sum();
        }
        let mid = lo + n / 2;
        if n > 1 << 15 {
            let (a, b) = rayon::join(|| rec(lo, mid, term), || rec(mid, hi, term));
            a + b
        } else {
            rec(lo, mid, term) + rec(mid, hi, term)
        }
    }
    rec(0, len, &term)
}

/// Deterministic maximum of `term(0..len)`.
pub fn max_by<F: Fn(usize) -> f64 + Sync>(len: usize, term: F) -> f64 {
    (0..len).into_par_iter().map(&term).reduce(|| 0.0, f64::max)
}

/// Raw-slice stencil kernels shared by the geometry and map layers.
pub(crate) mod stencil {
    use super::Grid4;
    use rayon::prelude::*;

    /// Applies `op(center, fwd, bwd, out)` line-block by line-block, where
    /// `fwd`/`bwd` are the blocks `reach` cells ahead/behind along `axis`.
    fn along_axis<F>(src: &[f64], nc: usize, grid: &Grid4, axis: usize, reach: usize, out: &mut [f64], op: F)
    where
        F: Fn(&[f64], &[f64], &[f64], &mut [f64]) + Sync,
    {
        let n = grid.dims()[axis];
        let s = grid.strides()[axis] * nc;
        let block = n * s;
        let line = |base: usize, m: usize, dst: &mut [f64]| {
            let p = (m + reach) % n;
            let q = (m + n - reach) % n;
            op(
                &src[base + m * s..base + m * s + s],
                &src[base + p * s..base + p * s + s],
                &src[base + q * s..base + q * s + s],
                dst,
            );
        };
        if s >= 1024 {
            out.par_chunks_mut(s).enumerate().for_each(|(c, dst)| line((c / n) * block, c % n, dst));
        } else {
            let min_len = (8192 / block).max(1);
            out.par_chunks_mut(block).with_min_len(min_len).enumerate().for_each(|(b, dst)| {
                let base = b * block;
                let (lo, hi) = (reach * s, (n - reach) * s);
                op(
                    &src[base + lo..base + hi],
                    &src[base + lo + reach * s..base + hi + reach * s],
                    &src[base..base + hi - lo],
                    &mut dst[lo..hi],
                );
                for m in (0..reach).chain(n - reach..n) {
                    line(base, m, &mut dst[m * s..(m + 1) * s]);
                }
            });
        }
    }

    pub fn d1_into(src: &[f64], nc: usize, grid: &Grid4, axis: usize, out: &mut [f64]) {
        let inv = 0.5 / grid.spacing()[axis];
        along_axis(src, nc, grid, axis, 1, out, |_, f, b, o| {
            for k in 0..o.len() {
                o[k] = (f[k] - b[k]) * inv;
            }
        });
    }

    pub fn d1(src: &[f64], nc: usize, grid: &Grid4, axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        d1_into(src, nc, grid, axis, &mut out);
        out
    }

    /// Representative of `d` mod `p` in `[-p/2, p/2)`, for `|d| < 3p/2`.
    #[inline]
    fn minimal_image(d: f64, p: f64) -> f64 {
        if d >= 0.5 * p {
            d - p
        } else if d < -0.5 * p {
            d + p
        } else {
            d
        }
    }

    /// First difference of chart coordinates defined modulo `periods`
    /// (one period per component); neighbour differences are reduced to the
    /// minimal image before dividing.
    pub fn d1_mod(src: &[f64], periods: &[f64], grid: &Grid4, axis: usize) -> Vec<f64> {
        let nc = periods.len();
        let inv = 0.5 / grid.spacing()[axis];
        let mut out = vec![0.0; src.len()];
        along_axis(src, nc, grid, axis, 1, &mut out, |_, f, b, o| {
            for k in 0..o.len() {
                let p = periods[k % nc];
                o[k] = minimal_image(f[k] - b[k], p) * inv;
            }
        });
        out
    }

    /// `D_axis ∘ D_axis` as one stride-2 pass.
    pub fn d2(src: &[f64], nc: usize, grid: &Grid4, axis: usize) -> Vec<f64> {
        let h = grid.spacing()[axis];
        let inv = 0.25 / (h * h);
        let mut out = vec![0.0; src.len()];
        along_axis(src, nc, grid, axis, 2, &mut out, |c, f, b, o| {
            for k in 0..o.len() {
                o[k] = (f[k] - 2.0 * c[k] + b[k]) * inv;
            }
        });
        out
    }

    /// `out += scale * D_axis(src)`.
    pub fn d1_accumulate(src: &[f64], nc: usize, grid: &Grid4, axis: usize, scale: f64, out: &mut [f64]) {
        let inv = 0.5 * scale / grid.spacing()[axis];
        along_axis(src, nc, grid, axis, 1, out, |_, f, b, o| {
            for k in 0..o.len() {
                o[k] += (f[k] - b[k]) * inv;
            }
        });
    }

    /// `out += scale * D_axis(D_axis(src))`.
    pub fn d2_accumulate(src: &[f64], nc: usize, grid: &Grid4, axis: usize, scale: f64, out: &mut [f64]) {
        let h = grid.spacing()[axis];
        let inv = 0.25 * scale / (h * h);
        along_axis(src, nc, grid, axis, 2, out, |c, f, b, o| {
            for k in 0..o.len() {
                o[k] += (f[k] - 2.0 * c[k] + b[k]) * inv;
            }
        });
    }

    /// [`d2_accumulate`] for coordinates defined modulo `periods`; each
    /// neighbour difference is reduced to the minimal image.
    pub fn d2_mod_accumulate(src: &[f64], periods: &[f64], grid: &Grid4, axis: usize, scale: f64, out: &mut [f64]) {
        let nc = periods.len();
        let h = grid.spacing()[axis];
        let inv = 0.25 * scale / (h * h);
        along_axis(src, nc, grid, axis, 2, out, |c, f, b, o| {
            for k in 0..o.len() {
                let p = periods[k % nc];
                o[k] += (minimal_image(f[k] - c[k], p) - minimal_image(c[k] - b[k], p)) * inv;
            }
        });
    }

    /// Strided view helpers: extract component block `[lo, lo+width)` of each node.
    pub fn extract(src: &[f64], nc: usize, lo: usize, width: usize) -> Vec<f64> {
        let nodes = src.len() / nc;
        let mut out = Vec::with_capacity(nodes * width);
        for k in 0..nodes {
            out.extend_from_slice(&src[k * nc + lo..k * nc + lo + width]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine_error(n: usize) -> f64 {
        let grid = Grid4::cubic(n, 1.0).unwrap();
        let f = Field::scalar_from_fn(grid, |x| (2.0 * PI * x[0]).sin()).unwrap();
        let d = diff(&f, 0, 1).unwrap();
        (0..grid.node_count())
            .map(|k| (d.values()[k] - 2.0 * PI * (2.0 * PI * grid.coords(k)[0]).cos()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_validation() {
        assert!(Grid4::new([8, 8, 8, 8], [1.0; 4]).is_ok());
        assert!(Grid4::new([12, 16, 16, 16], [1.0; 4]).is_ok());
        assert!(Grid4::new([6, 8, 8, 8], [1.0; 4]).is_err());
        assert!(Grid4::new([9, 8, 8, 8], [1.0; 4]).is_err());
        assert!(Grid4::new([8, 8, 8, 8], [1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn index_roundtrip_and_shift() {
        let grid = Grid4::new([8, 10, 12, 8], [1.0; 4]).unwrap();
        for idx in [0, 1, 77, 4000, grid.node_count() - 1] {
            assert_eq!(grid.index(grid.multi_index(idx)), idx);
            for axis in 0..4 {
                let there = grid.shift(idx, axis, 1);
                assert_eq!(grid.shift(there, axis, -1), idx);
                let mut m = grid.multi_index(idx);
                m[axis] = (m[axis] + 1) % grid.dims()[axis];
                assert_eq!(grid.index(m), there);
            }
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let grid = Grid4::cubic(8, 1.0).unwrap();
        let f = Field::constant(grid, Rank::Target(2), &[3.5, -1.0]).unwrap();
        for axis in 0..4 {
            for order in [1, 2] {
                assert_eq!(diff(&f, axis, order).unwrap().max_abs(), 0.0);
            }
        }
    }

    #[test]
    fn derivative_along_independent_axis_vanishes() {
        let grid = Grid4::cubic(8, 1.0).unwrap();
        let f = Field::scalar_from_fn(grid, |x| (2.0 * PI * x[0]).sin() + x[2].cos()).unwrap();
        assert_eq!(diff(&f, 1, 1).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn first_difference_is_second_order() {
        let coarse = sine_error(16);
        let fine = sine_error(32);
        let order = (coarse / fine).log2();
        assert!((coarse / fine - 4.0).abs() < 0.1, "ratio {}", coarse / fine);
        assert!(order >= 1.9);
    }

    #[test]
    fn errors_on_bad_axis_order_and_nan() {
        let grid = Grid4::cubic(8, 1.0).unwrap();
        let f = Field::zeros(grid, Rank::Scalar);
        assert!(matches!(diff(&f, 4, 1), Err(Error::AxisOutOfRange(4))));
        assert!(matches!(diff(&f, 0, 3), Err(Error::UnsupportedOrder(3))));
        let mut values = vec![0.0; grid.node_count()];
        values[5] = f64::NAN;
        assert!(Field::new(grid, Rank::Scalar, values).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let grid = Grid4::cubic(8, 1.0).unwrap();
        let one = Field::constant(grid, Rank::Scalar, &[1.0]).unwrap();
        assert!((integrate(&one, &one).unwrap() - 1.0).abs() < 1e-14);

        let phi: f64 = 0.1;
        let vol = Field::constant(grid, Rank::Scalar, &[(4.0 * phi).exp()]).unwrap();
        assert!((integrate(&one, &vol).unwrap() - (4.0 * phi).exp()).abs() < 1e-12);

        let s2 = Field::scalar_from_fn(grid, |x| (2.0 * PI * x[0]).sin().powi(2)).unwrap();
        assert!((integrate(&s2, &one).unwrap() - 0.5).abs() < 1e-12);

        let bad = Field::constant(grid, Rank::Scalar, &[0.0]).unwrap();
        assert!(matches!(integrate(&one, &bad), Err(Error::NonPositiveVolume { .. })));
    }

    #[test]
    fn mod_difference_ignores_wrapping() {
        let grid = Grid4::cubic(8, 1.0).unwrap();
        let raw: Vec<f64> = (0..grid.node_count()).map(|k| 0.3 * (2.0 * PI * grid.coords(k)[1]).sin()).collect();
        let wrapped: Vec<f64> = raw.iter().map(|v| v.rem_euclid(1.0)).collect();
        let a = stencil::d1(&raw, 1, &grid, 1);
        let b = stencil::d1_mod(&wrapped, &[1.0], &grid, 1);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn d2_matches_composition() {
        let grid = Grid4::new([8, 10, 8, 12], [1.0, 2.0, 1.5, 1.0]).unwrap();
        let src: Vec<f64> = (0..grid.node_count() * 2).map(|k| ((k * 7919) % 101) as f64 / 101.0).collect();
        for axis in 0..4 {
            let once = stencil::d1(&src, 2, &grid, axis);
            let twice = stencil::d1(&once, 2, &grid, axis);
            let direct = stencil::d2(&src, 2, &grid, axis);
            for (a, b) in twice.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
            }
        }
    }
}
