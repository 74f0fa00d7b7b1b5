//! Maps into a space form and the pullback calculus along them.
//!
//! All frames are coordinate frames; contractions over M use `g^{ij}`,
//! contractions over N use `h = c(u)·Id`.
//!
//! Torus maps are `u^a(x) = Σ_i A^a_i P_a x_i / L_i + v^a(x)` modulo `P_a`,
//! with an integer matrix `A` (the homotopy class) and a periodic
//! displacement `v` stored reduced into `[0, P_a)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Background;
use crate::grid::{stencil, sum_by, Field, Grid4, Rank, SYM_INDEX, SYM_PAIRS};
use crate::target::{dot, SpaceForm, MAX_TARGET_DIM};

const N: usize = MAX_TARGET_DIM;

#[derive(Clone, Debug, PartialEq)]
pub struct MapField {
    target: SpaceForm,
    linear_part: Vec<[i64; 4]>,
    disp: Field,
}

impl MapField {
    /// Validates `disp` against the chart and reduces torus coordinates.
    pub fn new(target: SpaceForm, linear_part: Vec<[i64; 4]>, disp: Field) -> Result<Self> {
        let n = target.dim();
        disp.expect_rank(&Rank::Target(n))?;
        if linear_part.len() != n {
            return Err(Error::InvalidMap(format!("linear part has {} rows, target dim is {n}", linear_part.len())));
        }
        if !target.is_flat() && linear_part.iter().flatten().any(|&a| a != 0) {
            return Err(Error::InvalidMap("ball targets carry no linear part".into()));
        }
        let grid = *disp.grid();
        let mut values = disp.into_values();
        values.par_chunks_mut(n).try_for_each(|y| target.wrap_in_place(y))?;
        Ok(Self { target, linear_part, disp: Field::from_parts_unchecked(grid, Rank::Target(n), values) })
    }

    pub fn from_fn(
        grid: Grid4,
        target: SpaceForm,
        linear_part: Vec<[i64; 4]>,
        f: impl Fn([f64; 4], &mut [f64]) + Sync,
    ) -> Result<Self> {
        let n = target.dim();
        Self::new(target, linear_part, Field::from_fn(grid, Rank::Target(n), f)?)
    }

    pub fn constant(grid: Grid4, target: SpaceForm, point: &[f64]) -> Result<Self> {
        let n = target.dim();
        let disp = Field::constant(grid, Rank::Target(n), point)?;
        Self::new(target, vec![[0; 4]; n], disp)
    }

    /// The affine torus map with zero displacement.
    pub fn affine(grid: Grid4, target: SpaceForm, linear_part: Vec<[i64; 4]>) -> Result<Self> {
        let n = target.dim();
        Self::new(target, linear_part, Field::zeros(grid, Rank::Target(n)))
    }

    /// Same class and target, new displacement values.
    pub fn with_disp(&self, values: Vec<f64>) -> Result<Self> {
        let disp = Field::new(*self.grid(), self.disp.rank().clone(), values)?;
        Self::new(self.target.clone(), self.linear_part.clone(), disp)
    }

    /// `u + ε·v` by chart addition.
    pub fn perturbed(&self, v: &Section, eps: f64) -> Result<Self> {
        self.check_section(v)?;
        let values = self.disp.values().iter().zip(v.values()).map(|(a, b)| a + eps * b).collect();
        self.with_disp(values)
    }

    pub fn grid(&self) -> &Grid4 {
        self.disp.grid()
    }

    pub fn target(&self) -> &SpaceForm {
        &self.target
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn linear_part(&self) -> &[[i64; 4]] {
        &self.linear_part
    }

    pub fn disp(&self) -> &Field {
        &self.disp
    }

    /// Chart coordinates of `u` at a node (the stored, reduced value).
    pub fn point(&self, idx: usize) -> &[f64] {
        self.disp.node(idx)
    }

    /// Constant part of `du`: `A^a_i P_a / L_i`.
    pub fn slope(&self) -> Vec<[f64; 4]> {
        let lengths = self.grid().lengths();
        match self.target.periods() {
            Some(periods) => self
                .linear_part
                .iter()
                .zip(periods)
                .map(|(row, p)| std::array::from_fn(|i| row[i] as f64 * p / lengths[i]))
                .collect(),
            None => vec![[0.0; 4]; self.dim()],
        }
    }

    /// Max-norm distance of the displacement from `other`'s, using minimal
    /// images on torus targets.
    pub fn disp_distance(&self, other: &MapField) -> Result<f64> {
        if self.grid() != other.grid() || self.target != other.target {
            return Err(Error::GridMismatch);
        }
        let n = self.dim();
        let periods = self.target.periods();
        Ok(self
            .disp
            .values()
            .iter()
            .zip(other.disp.values())
            .enumerate()
            .map(|(k, (a, b))| {
                let d = a - b;
                match periods {
                    Some(p) => {
                        let p = p[k % n];
                        (d - p * (d / p).round()).abs()
                    }
                    None => d.abs(),
                }
            })
            .fold(0.0, f64::max))
    }

    pub(crate) fn check_section(&self, s: &Section) -> Result<()> {
        if s.field.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        s.field.expect_rank(&Rank::Target(self.dim()))
    }

    fn check_one_form(&self, w: &PullbackOneForm) -> Result<()> {
        if w.field.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        w.field.expect_rank(&Rank::Mixed(vec![4, self.dim()]))
    }

    fn check_background(&self, bg: &Background) -> Result<()> {
        if bg.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// A section of `u*TN`: `n` chart components per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    field: Field,
}

impl Section {
    pub fn new(field: Field) -> Result<Self> {
        match field.rank() {
            Rank::Target(_) => Ok(Self { field }),
            other => Err(Error::RankMismatch { expected: "target(n)".into(), found: other.to_string() }),
        }
    }

    pub fn zeros(grid: Grid4, n: usize) -> Self {
        Self { field: Field::zeros(grid, Rank::Target(n)) }
    }

    pub fn from_fn(grid: Grid4, n: usize, f: impl Fn([f64; 4], &mut [f64]) + Sync) -> Result<Self> {
        Ok(Self { field: Field::from_fn(grid, Rank::Target(n), f)? })
    }

    pub(crate) fn from_values(grid: Grid4, n: usize, values: Vec<f64>) -> Result<Self> {
        Ok(Self { field: Field::new(grid, Rank::Target(n), values)? })
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn max_abs(&self) -> f64 {
        self.field.max_abs()
    }
}

/// A `u*TN`-valued 1-form, `values[node·4n + i·n + a] = ω_i^a`.
#[derive(Clone, Debug, PartialEq)]
pub struct PullbackOneForm {
    field: Field,
}

impl PullbackOneForm {
    pub fn new(field: Field) -> Result<Self> {
        match field.rank() {
            Rank::Mixed(shape) if shape.len() == 2 && shape[0] == 4 => Ok(Self { field }),
            other => Err(Error::RankMismatch { expected: "mixed([4, n])".into(), found: other.to_string() }),
        }
    }

    pub fn from_fn(grid: Grid4, n: usize, f: impl Fn([f64; 4], &mut [f64]) + Sync) -> Result<Self> {
        Ok(Self { field: Field::from_fn(grid, Rank::Mixed(vec![4, n]), f)? })
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn max_abs(&self) -> f64 {
        self.field.max_abs()
    }
}

/// First and second differences of a map: `p_i = du_i` and `q_ij = D_i p_j`.
pub(crate) struct Jet {
    /// `p[node·4n + i·n + a]`
    pub p: Vec<f64>,
    /// `q[node·10n + pair(i,j)·n + a]`
    pub q: Vec<f64>,
}

pub(crate) fn first_differences(u: &MapField) -> Vec<f64> {
    let grid = u.grid();
    let n = u.dim();
    let nodes = grid.node_count();
    let slope = u.slope();
    let mut p = vec![0.0; nodes * 4 * n];
    for axis in 0..4 {
        let d = match u.target.periods() {
            Some(periods) => stencil::d1_mod(u.disp.values(), periods, grid, axis),
            None => stencil::d1(u.disp.values(), n, grid, axis),
        };
        p.par_chunks_mut(4 * n).zip(d.par_chunks(n)).for_each(|(dst, src)| {
            for a in 0..n {
                dst[axis * n + a] = src[a] + slope[a][axis];
            }
        });
    }
    p
}

pub(crate) fn jet(u: &MapField) -> Jet {
    let grid = u.grid();
    let n = u.dim();
    let nodes = grid.node_count();
    let p = first_differences(u);
    let mut q = vec![0.0; nodes * 10 * n];
    for i in 0..4 {
        let dp = stencil::d1(&p, 4 * n, grid, i);
        q.par_chunks_mut(10 * n).zip(dp.par_chunks(4 * n)).for_each(|(dst, src)| {
            for j in i..4 {
                let slot = SYM_INDEX[i][j] * n;
                dst[slot..slot + n].copy_from_slice(&src[j * n..j * n + n]);
            }
        });
    }
    Jet { p, q }
}

/// `Γ^N(x, y)^a` for a conformally flat chart with log-gradient `l`.
#[inline]
pub(crate) fn gamma_n(l: &[f64], x: &[f64], y: &[f64], out: &mut [f64]) {
    let lx = dot(l, x);
    let ly = dot(l, y);
    let xy = dot(x, y);
    for a in 0..x.len() {
        out[a] = x[a] * ly + y[a] * lx - xy * l[a];
    }
}

/// Pointwise Hessian `H_ij = q_ij − Γ^k_ij p_k + Γ^N(p_i, p_j)`, 10 pairs × n.
#[inline]
pub(crate) fn hessian_node(n: usize, p: &[f64], q: &[f64], gamma: &[f64], l: &[f64], flat_n: bool, out: &mut [f64]) {
    let mut tmp = [0.0; N];
    for (pair, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        let h = &mut out[pair * n..pair * n + n];
        h.copy_from_slice(&q[pair * n..pair * n + n]);
        for k in 0..4 {
            let gk = gamma[k * 10 + pair];
            if gk != 0.0 {
                for a in 0..n {
                    h[a] -= gk * p[k * n + a];
                }
            }
        }
        if !flat_n {
            gamma_n(l, &p[i * n..i * n + n], &p[j * n..j * n + n], &mut tmp[..n]);
            for a in 0..n {
                h[a] += tmp[a];
            }
        }
    }
}

/// `τ = −g^{ij}H_ij`.
#[inline]
pub(crate) fn tension_node(n: usize, hess: &[f64], ginv: &[[f64; 4]; 4], out: &mut [f64]) {
    out[..n].fill(0.0);
    for (pair, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        let w = if i == j { ginv[i][j] } else { 2.0 * ginv[i][j] };
        if w != 0.0 {
            for a in 0..n {
                out[a] -= w * hess[pair * n + a];
            }
        }
    }
}

/// `du`, with the linear part included on torus targets.
pub fn differential(u: &MapField) -> PullbackOneForm {
    let n = u.dim();
    let p = first_differences(u);
    PullbackOneForm { field: Field::from_parts_unchecked(*u.grid(), Rank::Mixed(vec![4, n]), p) }
}

/// `(∇̃_i ω)_j^a = D_i ω_j^a − Γ^k_{ij} ω_k^a + Γ^N(du_i, ω_j)^a`, stored
/// as `[node·16n + (i·4 + j)·n + a]`.
pub fn pullback_derivative(u: &MapField, omega: &PullbackOneForm, bg: &Background) -> Result<Field> {
    u.check_one_form(omega)?;
    u.check_background(bg)?;
    let grid = *u.grid();
    let n = u.dim();
    let nodes = grid.node_count();
    let p = first_differences(u);
    let w = omega.values();
    let dw: Vec<Vec<f64>> = (0..4).map(|i| stencil::d1(w, 4 * n, &grid, i)).collect();
    let gamma = &bg.curvature().gamma;
    let flat_n = u.target.is_flat();
    let mut out = vec![0.0; nodes * 16 * n];
    out.par_chunks_mut(16 * n).enumerate().for_each(|(idx, dst)| {
        let mut l = [0.0; N];
        u.target.log_grad(u.point(idx), &mut l[..n]);
        let pn = &p[idx * 4 * n..(idx + 1) * 4 * n];
        let wn = &w[idx * 4 * n..(idx + 1) * 4 * n];
        let mut tmp = [0.0; N];
        for i in 0..4 {
            for j in 0..4 {
                let o = &mut dst[(i * 4 + j) * n..(i * 4 + j + 1) * n];
                o.copy_from_slice(&dw[i][idx * 4 * n + j * n..idx * 4 * n + j * n + n]);
                for k in 0..4 {
                    let gk = gamma.get(idx, k, i, j);
                    for a in 0..n {
                        o[a] -= gk * wn[k * n + a];
                    }
                }
                if !flat_n {
                    gamma_n(&l[..n], &pn[i * n..i * n + n], &wn[j * n..j * n + n], &mut tmp[..n]);
                    for a in 0..n {
                        o[a] += tmp[a];
                    }
                }
            }
        }
    });
    Field::new(grid, Rank::Mixed(vec![4, 4, n]), out)
}

/// `∇̃du`, symmetric in `(i, j)`, in the layout of [`pullback_derivative`].
pub fn hessian(u: &MapField, bg: &Background) -> Result<Field> {
    u.check_background(bg)?;
    let grid = *u.grid();
    let n = u.dim();
    let jet = jet(u);
    let gamma = &bg.curvature().gamma;
    let flat_n = u.target.is_flat();
    let mut out = vec![0.0; grid.node_count() * 16 * n];
    out.par_chunks_mut(16 * n).enumerate().for_each(|(idx, dst)| {
        let mut l = [0.0; N];
        u.target.log_grad(u.point(idx), &mut l[..n]);
        let mut h = [0.0; 10 * N];
        hessian_node(
            n,
            &jet.p[idx * 4 * n..(idx + 1) * 4 * n],
            &jet.q[idx * 10 * n..(idx + 1) * 10 * n],
            gamma.node(idx),
            &l[..n],
            flat_n,
            &mut h,
        );
        for i in 0..4 {
            for j in 0..4 {
                let s = SYM_INDEX[i][j] * n;
                dst[(i * 4 + j) * n..(i * 4 + j + 1) * n].copy_from_slice(&h[s..s + n]);
            }
        }
    });
    Field::new(grid, Rank::Mixed(vec![4, 4, n]), out)
}

/// `τ(u) = −g^{ij}(∇̃du)_ij`.
pub fn tension(u: &MapField, bg: &Background) -> Result<Section> {
    u.check_background(bg)?;
    let grid = *u.grid();
    let n = u.dim();
    let jet = jet(u);
    let gamma = &bg.curvature().gamma;
    let flat_n = u.target.is_flat();
    let mut out = vec![0.0; grid.node_count() * n];
    out.par_chunks_mut(n).enumerate().for_each(|(idx, dst)| {
        let mut l = [0.0; N];
        u.target.log_grad(u.point(idx), &mut l[..n]);
        let mut h = [0.0; 10 * N];
        hessian_node(
            n,
            &jet.p[idx * 4 * n..(idx + 1) * 4 * n],
            &jet.q[idx * 10 * n..(idx + 1) * 10 * n],
            gamma.node(idx),
            &l[..n],
            flat_n,
            &mut h,
        );
        tension_node(n, &h, &bg.ginv[idx], dst);
    });
    Section::from_values(grid, n, out)
}

/// `(∇̄_i s)^a = D_i s^a + Γ^N(du_i, s)^a`.
pub fn connection_on_section(u: &MapField, s: &Section) -> Result<PullbackOneForm> {
    u.check_section(s)?;
    let grid = *u.grid();
    let n = u.dim();
    let p = first_differences(u);
    let flat_n = u.target.is_flat();
    let ds: Vec<Vec<f64>> = (0..4).map(|i| stencil::d1(s.values(), n, &grid, i)).collect();
    let mut out = vec![0.0; grid.node_count() * 4 * n];
    out.par_chunks_mut(4 * n).enumerate().for_each(|(idx, dst)| {
        let mut l = [0.0; N];
        u.target.log_grad(u.point(idx), &mut l[..n]);
        let sn = s.field.node(idx);
        let mut tmp = [0.0; N];
        for i in 0..4 {
            let o = &mut dst[i * n..(i + 1) * n];
            o.copy_from_slice(&ds[i][idx * n..(idx + 1) * n]);
            if !flat_n {
                gamma_n(&l[..n], &p[idx * 4 * n + i * n..idx * 4 * n + i * n + n], sn, &mut tmp[..n]);
                for a in 0..n {
                    o[a] += tmp[a];
                }
            }
        }
    });
    Ok(PullbackOneForm { field: Field::new(grid, Rank::Mixed(vec![4, n]), out)? })
}

/// The exact lattice adjoint of [`connection_on_section`] for the inner
/// products of [`section_inner`] and [`one_form_inner`]:
///
/// ```text
/// (∇̄*ω)^e = (h^{ed}/√g)[−D_i(√g g^{ij} h_db ω_j^b) + √g g^{ij} h_ab Γ^a_cd du_i^c ω_j^b]
/// ```
pub fn adjoint_div(u: &MapField, omega: &PullbackOneForm, bg: &Background) -> Result<Section> {
    u.check_one_form(omega)?;
    u.check_background(bg)?;
    let grid = *u.grid();
    let n = u.dim();
    let nodes = grid.node_count();
    let p = first_differences(u);
    let w = omega.values();
    let vol = bg.metric().vol().values();
    let flat_n = u.target.is_flat();
    // rho[node·4n + i·n + d] = √g g^{ij} c ω_j^d
    let mut rho = vec![0.0; nodes * 4 * n];
    rho.par_chunks_mut(4 * n).enumerate().for_each(|(idx, dst)| {
        let c = u.target.factor(u.point(idx));
        let gi = &bg.ginv[idx];
        for i in 0..4 {
            for a in 0..n {
                dst[i * n + a] = vol[idx] * c * (0..4).map(|j| gi[i][j] * w[idx * 4 * n + j * n + a]).sum::<f64>();
            }
        }
    });
    let mut out = vec![0.0; nodes * n];
    for i in 0..4 {
        let ri = stencil::extract(&rho, 4 * n, i * n, n);
        stencil::d1_accumulate(&ri, n, &grid, i, -1.0, &mut out);
    }
    out.par_chunks_mut(n).enumerate().for_each(|(idx, dst)| {
        let y = u.point(idx);
        let c = u.target.factor(y);
        if !flat_n {
            let mut l = [0.0; N];
            u.target.log_grad(y, &mut l[..n]);
            // ρ_i·Γ(p_i, e_d) summed over i
            for i in 0..4 {
                let r = &rho[idx * 4 * n + i * n..idx * 4 * n + i * n + n];
                let pi = &p[idx * 4 * n + i * n..idx * 4 * n + i * n + n];
                let rl = dot(r, &l[..n]);
                let rp = dot(r, pi);
                let lp = dot(&l[..n], pi);
                for d in 0..n {
                    dst[d] += rp * l[d] + r[d] * lp - pi[d] * rl;
                }
            }
        }
        let scale = 1.0 / (c * vol[idx]);
        for v in dst.iter_mut() {
            *v *= scale;
        }
    });
    Section::from_values(grid, n, out)
}

/// `Δ̄ = ∇̄*∇̄`.
pub fn rough_laplacian(u: &MapField, s: &Section, bg: &Background) -> Result<Section> {
    adjoint_div(u, &connection_on_section(u, s)?, bg)
}

/// `⟨s, t⟩ = Σ √g ∏h · h(s, t)`.
pub fn section_inner(u: &MapField, bg: &Background, s: &Section, t: &Section) -> Result<f64> {
    u.check_section(s)?;
    u.check_section(t)?;
    u.check_background(bg)?;
    Ok(sum_by(u.grid().node_count(), |k| {
        bg.weight[k] * u.target.factor(u.point(k)) * dot(s.field.node(k), t.field.node(k))
    }))
}

/// `⟨ω, η⟩ = Σ √g ∏h · g^{ij} h(ω_i, η_j)`.
pub fn one_form_inner(u: &MapField, bg: &Background, a: &PullbackOneForm, b: &PullbackOneForm) -> Result<f64> {
    u.check_one_form(a)?;
    u.check_one_form(b)?;
    u.check_background(bg)?;
    let n = u.dim();
    Ok(sum_by(u.grid().node_count(), |k| {
        let gi = &bg.ginv[k];
        let an = a.field.node(k);
        let bn = b.field.node(k);
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                acc += gi[i][j] * dot(&an[i * n..i * n + n], &bn[j * n..j * n + n]);
            }
        }
        bg.weight[k] * u.target.factor(u.point(k)) * acc
    }))
}

/// Pointwise squared norms of `∇̃du`, `τ(u)` and the trace-free part
/// `∇̃du + ¼ g τ`.
#[derive(Clone, Debug)]
pub struct HessianNorms {
    pub hessian: Vec<f64>,
    pub tension: Vec<f64>,
    pub trace_free: Vec<f64>,
}

impl HessianNorms {
    /// Min over nodes of `|∇̃du|² − ¼|τ|²`.
    pub fn min_trace_free_gap(&self) -> f64 {
        self.hessian.iter().zip(&self.tension).map(|(h, t)| h - 0.25 * t).fold(f64::INFINITY, f64::min)
    }

    /// Max over nodes of `| |∇̃du|² − ¼|τ|² − |∇̃₀du|² |`.
    pub fn identity_defect(&self) -> f64 {
        self.hessian
            .iter()
            .zip(&self.tension)
            .zip(&self.trace_free)
            .map(|((h, t), f)| (h - 0.25 * t - f).abs())
            .fold(0.0, f64::max)
    }
}

pub fn hessian_norms(u: &MapField, bg: &Background) -> Result<HessianNorms> {
    u.check_background(bg)?;
    let n = u.dim();
    let nodes = u.grid().node_count();
    let jet = jet(u);
    let gamma = &bg.curvature().gamma;
    let flat_n = u.target.is_flat();
    let triples: Vec<(f64, f64, f64)> = (0..nodes)
        .into_par_iter()
        .map(|idx| {
            let y = u.point(idx);
            let c = u.target.factor(y);
            let mut l = [0.0; N];
            u.target.log_grad(y, &mut l[..n]);
            let mut h = [0.0; 10 * N];
            hessian_node(
                n,
                &jet.p[idx * 4 * n..(idx + 1) * 4 * n],
                &jet.q[idx * 10 * n..(idx + 1) * 10 * n],
                gamma.node(idx),
                &l[..n],
                flat_n,
                &mut h,
            );
            let gi = &bg.ginv[idx];
            let g = bg.metric().metric_at(idx);
            let mut tau = [0.0; N];
            tension_node(n, &h, gi, &mut tau);
            let full = |i: usize, j: usize| &h[SYM_INDEX[i][j] * n..SYM_INDEX[i][j] * n + n];
            let mut free = [[[0.0; N]; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    for a in 0..n {
                        free[i][j][a] = full(i, j)[a] + 0.25 * g[i][j] * tau[a];
                    }
                }
            }
            let mut hn = 0.0;
            let mut fnorm = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        for m in 0..4 {
                            let w = gi[i][k] * gi[j][m];
                            if w != 0.0 {
                                hn += w * dot(full(i, j), full(k, m));
                                fnorm += w * dot(&free[i][j][..n], &free[k][m][..n]);
                            }
                        }
                    }
                }
            }
            (c * hn, c * dot(&tau[..n], &tau[..n]), c * fnorm)
        })
        .collect();
    Ok(HessianNorms {
        hessian: triples.iter().map(|t| t.0).collect(),
        tension: triples.iter().map(|t| t.1).collect(),
        trace_free: triples.iter().map(|t| t.2).collect(),
    })
}
