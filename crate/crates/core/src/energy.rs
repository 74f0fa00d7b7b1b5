//! The conformal energy, its gradient, and the structural residuals.
//!
//! On the lattice
//!
//! ```text
//! ℰ(u) = Σ_x w c [ |τ|² + B^{ij} du_i·du_j ],   B^{ij} = ⅔S g^{ij} − 2Ric^{ij},
//! ```
//!
//! with `w = √g ∏h`, `h = c·Id` on the target and `τ = −g^{ij}∇̃_i du_j`.
//! [`c_harmonic_operator`] returns the exact gradient of this sum,
//! `dℰ(v) = 2⟨𝓛(u), v⟩`, for finite-difference stencils (no O(h²) mismatch).
//! [`c_harmonic_operator_assembled`] builds the same operator from its
//! three continuum terms and agrees with it to O(h²).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Background;
use crate::grid::{stencil, sum_by, Field, Grid4, Rank};
use crate::maps::{
    adjoint_div, hessian_node, hessian_norms, jet, rough_laplacian, section_inner,
    tension, tension_node, MapField, PullbackOneForm, Section,
};
use crate::target::{dot, MAX_TARGET_DIM};

const N: usize = MAX_TARGET_DIM;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub conformal: f64,
    pub biharmonic: f64,
    pub dirichlet: f64,
    pub quartic: f64,
    pub total: f64,
    pub hessian: f64,
}

/// Quadrature-weighted integrands, one entry per node.
#[derive(Clone, Debug)]
pub struct EnergyDensities {
    /// `w c |τ|²`
    pub tension: Vec<f64>,
    /// `w c B^{ij} du_i·du_j`
    pub coupling: Vec<f64>,
    /// `w c g^{ij} du_i·du_j`
    pub dirichlet: Vec<f64>,
    /// `w (c g^{ij} du_i·du_j)²`
    pub quartic: Vec<f64>,
}

impl EnergyDensities {
    pub fn conformal(&self) -> f64 {
        sum_by(self.tension.len(), |k| self.tension[k] + self.coupling[k])
    }

    pub fn biharmonic(&self) -> f64 {
        sum_by(self.tension.len(), |k| self.tension[k])
    }

    pub fn dirichlet(&self) -> f64 {
        sum_by(self.dirichlet.len(), |k| self.dirichlet[k])
    }

    pub fn quartic(&self) -> f64 {
        sum_by(self.quartic.len(), |k| self.quartic[k])
    }

    pub fn total(&self) -> f64 {
        self.conformal() + self.quartic().sqrt()
    }

    /// `Σ η e + (Σ η |du|⁴)^{1/2}` for a cutoff sampled on the nodes.
    pub fn localized(&self, eta: &[f64]) -> f64 {
        let n = self.tension.len();
        let e = sum_by(n, |k| eta[k] * (self.tension[k] + self.coupling[k]));
        let q = sum_by(n, |k| eta[k] * self.quartic[k]);
        e + q.sqrt()
    }
}

fn check(u: &MapField, bg: &Background) -> Result<()> {
    if u.grid() != bg.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

pub fn energy_densities(u: &MapField, bg: &Background) -> Result<EnergyDensities> {
    check(u, bg)?;
    let n = u.dim();
    let nodes = u.grid().node_count();
    let jet = jet(u);
    let gamma = &bg.curvature().gamma;
    let flat_n = u.target().is_flat();
    let cells: Vec<[f64; 4]> = (0..nodes)
        .into_par_iter()
        .map(|idx| {
            let y = u.point(idx);
            let c = u.target().factor(y);
            let mut l = [0.0; N];
            u.target().log_grad(y, &mut l[..n]);
            let p = &jet.p[idx * 4 * n..(idx + 1) * 4 * n];
            let mut h = [0.0; 10 * N];
            hessian_node(n, p, &jet.q[idx * 10 * n..(idx + 1) * 10 * n], gamma.node(idx), &l[..n], flat_n, &mut h);
            let gi = &bg.ginv[idx];
            let mut tau = [0.0; N];
            tension_node(n, &h, gi, &mut tau);
            let b = &bg.coupling[idx];
            let (mut t, mut bt) = (0.0, 0.0);
            for i in 0..4 {
                for j in 0..4 {
                    let pp = dot(&p[i * n..i * n + n], &p[j * n..j * n + n]);
                    t += gi[i][j] * pp;
                    bt += b[i][j] * pp;
                }
            }
            let w = bg.weight[idx];
            [w * c * dot(&tau[..n], &tau[..n]), w * c * bt, w * c * t, w * (c * t) * (c * t)]
        })
        .collect();
    Ok(EnergyDensities {
        tension: cells.iter().map(|v| v[0]).collect(),
        coupling: cells.iter().map(|v| v[1]).collect(),
        dirichlet: cells.iter().map(|v| v[2]).collect(),
        quartic: cells.iter().map(|v| v[3]).collect(),
    })
}

/// `ℰ(u) = ∫ |τ|² + ⅔S|du|² − 2Ric(du,du) dv_g`.
pub fn conformal_energy(u: &MapField, bg: &Background) -> Result<f64> {
    Ok(energy_densities(u, bg)?.conformal())
}

/// `𝓕(u) = ∫ |τ|² dv_g`.
pub fn biharmonic_energy(u: &MapField, bg: &Background) -> Result<f64> {
    Ok(energy_densities(u, bg)?.biharmonic())
}

/// `E(u) = ℰ(u) + (∫|du|⁴ dv_g)^{1/2}`.
pub fn total_energy(u: &MapField, bg: &Background) -> Result<f64> {
    Ok(energy_densities(u, bg)?.total())
}

pub fn energy_report(u: &MapField, bg: &Background) -> Result<EnergyReport> {
    let d = energy_densities(u, bg)?;
    let norms = hessian_norms(u, bg)?;
    let hess = sum_by(norms.hessian.len(), |k| norms.hessian[k] * bg.weight[k]);
    Ok(EnergyReport {
        conformal: d.conformal(),
        biharmonic: d.biharmonic(),
        dirichlet: d.dirichlet(),
        quartic: d.quartic(),
        total: d.total(),
        hessian: hess,
    })
}

/// `ℰ(u)/‖du‖²`.
pub fn coercivity_ratio(u: &MapField, bg: &Background) -> Result<f64> {
    let d = energy_densities(u, bg)?;
    let dir = d.dirichlet();
    if !(dir > 0.0) {
        return Err(Error::DegenerateMap);
    }
    Ok(d.conformal() / dir)
}

/// Quartic bump `η = 1` on `B_R`, `(1 − s²)²` with `s = (r − R)/R` on
/// `B_2R \ B_R`, `0` outside, in minimal-image flat distance.
#[derive(Clone, Copy, Debug)]
pub struct Cutoff {
    grid: Grid4,
    center: [f64; 4],
    radius: f64,
}

impl Cutoff {
    pub fn new(grid: Grid4, center: [f64; 4], radius: f64) -> Result<Self> {
        let limit = 0.25 * grid.min_length();
        if !(radius > 0.0 && radius < limit) {
            return Err(Error::RadiusTooLarge { radius, limit });
        }
        Ok(Self { grid, center, radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn eta(&self, x: [f64; 4]) -> f64 {
        let d = self.grid.torus_displacement(x, self.center);
        let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r <= self.radius {
            1.0
        } else if r >= 2.0 * self.radius {
            0.0
        } else {
            let s = (r - self.radius) / self.radius;
            (1.0 - s * s).powi(2)
        }
    }

    pub fn sample(&self) -> Vec<f64> {
        (0..self.grid.node_count()).into_par_iter().map(|k| self.eta(self.grid.coords(k))).collect()
    }

    /// Max over nodes of the Euclidean norms of the lattice gradient and
    /// Hessian of the sampled cutoff.
    pub fn derivative_bounds(&self) -> Result<(f64, f64)> {
        let grid = self.grid;
        let eta = Field::new(grid, Rank::Scalar, self.sample())?;
        let d1: Vec<Vec<f64>> = (0..4).map(|i| stencil::d1(eta.values(), 1, &grid, i)).collect();
        let d2: Vec<Vec<Vec<f64>>> = (0..4).map(|i| (0..4).map(|j| stencil::d1(&d1[j], 1, &grid, i)).collect()).collect();
        let mut g1: f64 = 0.0;
        let mut g2: f64 = 0.0;
        for k in 0..grid.node_count() {
            g1 = g1.max((0..4).map(|i| d1[i][k].powi(2)).sum::<f64>().sqrt());
            g2 = g2.max((0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| d2[i][j][k].powi(2)).sum::<f64>().sqrt());
        }
        Ok((g1, g2))
    }
}

/// Localized total energy around the node `center`.
pub fn local_energy(u: &MapField, bg: &Background, center: usize, radius: f64) -> Result<f64> {
    check(u, bg)?;
    if center >= u.grid().node_count() {
        return Err(Error::InvalidArgument(format!("center node {center} out of range")));
    }
    let cutoff = Cutoff::new(*u.grid(), u.grid().coords(center), radius)?;
    Ok(energy_densities(u, bg)?.localized(&cutoff.sample()))
}

/// The exact lattice gradient `G` of `ℰ` (or of `𝓕` without the coupling),
/// `dℰ(v) = Σ_x G·v`, from which `𝓛 = G/(2wc)`.
fn variational_gradient(u: &MapField, bg: &Background, coupling: bool) -> Result<Vec<f64>> {
    check(u, bg)?;
    if bg.is_flat() && u.target().is_flat() {
        return Ok(flat_gradient(u, bg));
    }
    let grid = *u.grid();
    let n = u.dim();
    let nodes = grid.node_count();
    let jet = jet(u);
    let gamma = &bg.curvature().gamma;
    let flat_n = u.target().is_flat();
    let h = grid.spacing();

    let mut s = vec![0.0; nodes * n];
    let mut pi = vec![0.0; nodes * 4 * n];
    let mut y_out = vec![0.0; nodes * n];
    s.par_chunks_mut(n)
        .zip(pi.par_chunks_mut(4 * n))
        .zip(y_out.par_chunks_mut(n))
        .enumerate()
        .for_each(|(idx, ((s, pi), yd))| {
            let y = u.point(idx);
            let c = u.target().factor(y);
            let mut l = [0.0; N];
            let mut lh = [0.0; N * N];
            if !flat_n {
                u.target().log_grad(y, &mut l[..n]);
                u.target().log_hessian(y, &mut lh);
            }
            let l = &l[..n];
            let p = &jet.p[idx * 4 * n..(idx + 1) * 4 * n];
            let pj = |j: usize| &p[j * n..j * n + n];
            let mut hs = [0.0; 10 * N];
            hessian_node(n, p, &jet.q[idx * 10 * n..(idx + 1) * 10 * n], gamma.node(idx), l, flat_n, &mut hs);
            let gi = &bg.ginv[idx];
            let b = &bg.coupling[idx];
            let gh = &bg.gamma_trace[idx];
            let w = bg.weight[idx];
            let mut tau = [0.0; N];
            tension_node(n, &hs, gi, &mut tau);
            let tau = &tau[..n];

            let (mut t, mut bt) = (0.0, 0.0);
            for i in 0..4 {
                for j in 0..4 {
                    let pp = dot(pj(i), pj(j));
                    t += gi[i][j] * pp;
                    if coupling {
                        bt += b[i][j] * pp;
                    }
                }
            }
            let e = w * c * (dot(tau, tau) + bt);
            for a in 0..n {
                s[a] = 2.0 * w * c * tau[a];
            }
            let m: [f64; 4] = std::array::from_fn(|j| dot(l, pj(j)));
            let sp: [f64; 4] = std::array::from_fn(|j| dot(s, pj(j)));
            let sl = dot(s, l);
            for k in 0..4 {
                for a in 0..n {
                    let mut v = s[a] * gh[k];
                    for j in 0..4 {
                        v -= 2.0 * gi[k][j] * (s[a] * m[j] + sp[j] * l[a] - pj(j)[a] * sl);
                        if coupling {
                            v += 2.0 * w * c * b[k][j] * pj(j)[a];
                        }
                    }
                    pi[k * n + a] = v;
                }
            }
            if !flat_n {
                let lmul = |x: &[f64], d: usize| (0..n).map(|cc| lh[d * n + cc] * x[cc]).sum::<f64>();
                for d in 0..n {
                    let mut v = 2.0 * l[d] * e + t * lmul(s, d);
                    for i in 0..4 {
                        for j in 0..4 {
                            v -= 2.0 * gi[i][j] * sp[i] * lmul(pj(j), d);
                        }
                    }
                    yd[d] = v;
                }
            }
        });

    // A_k = π_k + Σ_i D_i(g^{ik} s)
    let mut a = pi;
    a.par_chunks_mut(4 * n).enumerate().for_each(|(idx, dst)| {
        for i in 0..4 {
            let f = grid.shift(idx, i, 1);
            let b = grid.shift(idx, i, -1);
            let inv = 0.5 / h[i];
            for k in 0..4 {
                let (gf, gb) = (bg.ginv[f][i][k], bg.ginv[b][i][k]);
                if gf == 0.0 && gb == 0.0 {
                    continue;
                }
                for c in 0..n {
                    dst[k * n + c] += (gf * s[f * n + c] - gb * s[b * n + c]) * inv;
                }
            }
        }
    });
    // G = Y − Σ_k D_k A_k
    let mut g = y_out;
    for k in 0..4 {
        let ak = stencil::extract(&a, 4 * n, k * n, n);
        stencil::d1_accumulate(&ak, n, &grid, k, -1.0, &mut g);
    }
    Ok(g)
}

/// Constant metric, flat target: `G = −2w g^{ik} D_i D_k τ` with
/// `τ = −g^{ij} D_i du_j`.
fn flat_gradient(u: &MapField, bg: &Background) -> Vec<f64> {
    let grid = *u.grid();
    let n = u.dim();
    let gi = bg.ginv[0];
    let w = bg.weight[0];
    let diagonal = (0..4).all(|i| (0..4).all(|j| i == j || gi[i][j] == 0.0));
    let nodes = grid.node_count();
    if diagonal {
        let periods = u.target().periods().expect("flat target");
        let mut tau = vec![0.0; nodes * n];
        for i in 0..4 {
            stencil::d2_mod_accumulate(u.disp().values(), periods, &grid, i, -gi[i][i], &mut tau);
        }
        let mut g = vec![0.0; nodes * n];
        for i in 0..4 {
            stencil::d2_accumulate(&tau, n, &grid, i, -2.0 * w * gi[i][i], &mut g);
        }
        return g;
    }
    let tau = tension(u, bg).expect("grid checked").field().values().to_vec();
    let mut g = vec![0.0; tau.len()];
    for i in 0..4 {
        for k in i..4 {
            let coeff = if i == k { gi[i][i] } else { 2.0 * gi[i][k] };
            if coeff == 0.0 {
                continue;
            }
            let scale = -2.0 * w * coeff;
            if i == k {
                stencil::d2_accumulate(&tau, n, &grid, i, scale, &mut g);
            } else {
                let d = stencil::d1(&tau, n, &grid, k);
                stencil::d1_accumulate(&d, n, &grid, i, scale, &mut g);
            }
        }
    }
    g
}

fn gradient_to_section(u: &MapField, bg: &Background, g: Vec<f64>) -> Result<Section> {
    let n = u.dim();
    let mut g = g;
    g.par_chunks_mut(n).enumerate().for_each(|(idx, v)| {
        let scale = 1.0 / (2.0 * bg.weight[idx] * u.target().factor(u.point(idx)));
        for x in v.iter_mut() {
            *x *= scale;
        }
    });
    Section::new(Field::new(*u.grid(), Rank::Target(n), g)?)
}

/// `𝓛(u)` with `dℰ(v) = 2⟨𝓛(u), v⟩_{L²}`.
pub fn c_harmonic_operator(u: &MapField, bg: &Background) -> Result<Section> {
    let g = variational_gradient(u, bg, true)?;
    gradient_to_section(u, bg, g)
}

/// The biharmonic operator, `d𝓕(v) = 2⟨·, v⟩`.
pub fn biharmonic_operator(u: &MapField, bg: &Background) -> Result<Section> {
    let g = variational_gradient(u, bg, false)?;
    gradient_to_section(u, bg, g)
}

/// `Δ̄τ + g^{ij}R^N(du_i, τ)du_j + ∇̄*(B du)`, term by term.
pub fn c_harmonic_operator_assembled(u: &MapField, bg: &Background) -> Result<Section> {
    check(u, bg)?;
    let grid = *u.grid();
    let n = u.dim();
    let tau = tension(u, bg)?;
    let lap = rough_laplacian(u, &tau, bg)?;
    let du = crate::maps::differential(u);
    let p = du.values();
    let k_n = u.target().curvature();
    let mut bdu = vec![0.0; grid.node_count() * 4 * n];
    let mut out = lap.values().to_vec();
    bdu.par_chunks_mut(4 * n).zip(out.par_chunks_mut(n)).enumerate().for_each(|(idx, (bd, o))| {
        let g = bg.metric().metric_at(idx);
        let b = &bg.coupling[idx];
        let gi = &bg.ginv[idx];
        let pn = &p[idx * 4 * n..(idx + 1) * 4 * n];
        for i in 0..4 {
            for a in 0..n {
                let mut v = 0.0;
                for k in 0..4 {
                    for j in 0..4 {
                        v += g[i][k] * b[k][j] * pn[j * n + a];
                    }
                }
                bd[i * n + a] = v;
            }
        }
        if k_n != 0.0 {
            let c = u.target().factor(u.point(idx));
            let t = tau.field().node(idx);
            // R(X,τ)Y = K(⟨τ,Y⟩X − ⟨X,Y⟩τ)
            for i in 0..4 {
                for j in 0..4 {
                    if gi[i][j] == 0.0 {
                        continue;
                    }
                    let x = &pn[i * n..i * n + n];
                    let y = &pn[j * n..j * n + n];
                    let ty = c * dot(t, y);
                    let xy = c * dot(x, y);
                    for a in 0..n {
                        o[a] += gi[i][j] * k_n * (ty * x[a] - xy * t[a]);
                    }
                }
            }
        }
    });
    let bdu = PullbackOneForm::new(Field::new(grid, Rank::Mixed(vec![4, n]), bdu)?)?;
    let div = adjoint_div(u, &bdu, bg)?;
    for (o, d) in out.iter_mut().zip(div.values()) {
        *o += d;
    }
    Section::new(Field::new(grid, Rank::Target(n), out)?)
}

/// Both sides of the directional-derivative identity `dℰ(v) = 2⟨𝓛(u), v⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// `(ℰ(u+εv) − ℰ(u−εv))/(2ε)`
    pub difference_quotient: f64,
    /// `2⟨𝓛(u), v⟩`
    pub analytic: f64,
    pub abs_error: f64,
    pub rel_error: f64,
    /// Estimated relative error from rounding in the two energy evaluations.
    pub roundoff_floor: f64,
}

pub fn gradient_check(u: &MapField, bg: &Background, v: &Section, eps: f64) -> Result<GradientCheck> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps = {eps} must be positive")));
    }
    let plus = conformal_energy(&u.perturbed(v, eps)?, bg)?;
    let minus = conformal_energy(&u.perturbed(v, -eps)?, bg)?;
    let fd = (plus - minus) / (2.0 * eps);
    let l = c_harmonic_operator(u, bg)?;
    let analytic = 2.0 * section_inner(u, bg, &l, v)?;
    let abs_error = (fd - analytic).abs();
    let denom = analytic.abs() + 1e-30;
    let scale = energy_densities(u, bg).map(|d| {
        sum_by(d.tension.len(), |k| d.tension[k].abs() + d.coupling[k].abs())
    })?;
    Ok(GradientCheck {
        difference_quotient: fd,
        analytic,
        abs_error,
        rel_error: abs_error / denom,
        roundoff_floor: 64.0 * f64::EPSILON * (scale + plus.abs() + minus.abs()) / (2.0 * eps) / denom,
    })
}

/// The two sides of the Bochner identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BochnerTerms {
    /// `‖τ‖²`
    pub lhs: f64,
    /// `‖∇̃du‖² − ∫(Σ⟨R^N(du_i,du_j)du_j, du_i⟩ − Ric(du,du))`
    pub rhs: f64,
    pub residual: f64,
}

pub fn bochner_terms(u: &MapField, bg: &Background) -> Result<BochnerTerms> {
    check(u, bg)?;
    let n = u.dim();
    let norms = hessian_norms(u, bg)?;
    let du = crate::maps::differential(u);
    let p = du.values();
    let k_n = u.target().curvature();
    let nodes = u.grid().node_count();
    let lhs = sum_by(nodes, |k| norms.tension[k] * bg.weight[k]);
    let hess = sum_by(nodes, |k| norms.hessian[k] * bg.weight[k]);
    let curv = sum_by(nodes, |idx| {
        let c = u.target().factor(u.point(idx));
        let gi = &bg.ginv[idx];
        let ru = &bg.ric_up[idx];
        let pn = &p[idx * 4 * n..(idx + 1) * 4 * n];
        let m: [[f64; 4]; 4] =
            std::array::from_fn(|i| std::array::from_fn(|j| c * dot(&pn[i * n..i * n + n], &pn[j * n..j * n + n])));
        // M with the first index raised
        let mm: [[f64; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|j| (0..4).map(|k| gi[i][k] * m[k][j]).sum()));
        let tr: f64 = (0..4).map(|i| mm[i][i]).sum();
        let sq: f64 = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| mm[i][j] * mm[j][i]).sum();
        let ric: f64 = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| ru[i][j] * m[i][j]).sum();
        bg.weight[idx] * (k_n * (tr * tr - sq) - ric)
    });
    let rhs = hess - curv;
    Ok(BochnerTerms { lhs, rhs, residual: (lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1e-30) })
}

pub fn bochner_residual(u: &MapField, bg: &Background) -> Result<f64> {
    Ok(bochner_terms(u, bg)?.residual)
}
