//! Metrics on the lattice and their finite-difference curvature.
//!
//! Sign convention: `R(X,Y) = ∇_X∇_Y − ∇_Y∇_X − ∇_[X,Y]`, stored as
//! `R^k_{lij}` with `R(∂_i,∂_j)∂_l = R^k_{lij} ∂_k`, so
//!
//! ```text
//! R^k_{lij} = ∂_iΓ^k_{jl} − ∂_jΓ^k_{il} + Γ^k_{im}Γ^m_{jl} − Γ^k_{jm}Γ^m_{il}
//! Ric_{lj}  = R^k_{lkj},   S = g^{lj} Ric_{lj}.
//! ```
//!
//! With this choice the round 4-sphere has `S = +12` and sectional
//! curvature `⟨R(X,Y)Y,X⟩ > 0`.

use nalgebra::{Matrix4, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{stencil, sum_by, Field, Grid4, Rank, SYM_INDEX, SYM_PAIRS};

/// Largest admissible `|φ|` in a conformal factor `e^{2φ}`.
pub const MAX_CONFORMAL_EXPONENT: f64 = 20.0;

/// Antisymmetric index pairs `(i, j)`, `i < j`, in storage order.
pub const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

pub(crate) fn sym_to_mat(s: &[f64]) -> [[f64; 4]; 4] {
    std::array::from_fn(|i| std::array::from_fn(|j| s[SYM_INDEX[i][j]]))
}

fn mat_to_sym(m: &[[f64; 4]; 4]) -> [f64; 10] {
    std::array::from_fn(|p| {
        let (i, j) = SYM_PAIRS[p];
        0.5 * (m[i][j] + m[j][i])
    })
}

fn to_na(m: &[[f64; 4]; 4]) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| m[i][j])
}

fn leading_minors_positive(m: &Matrix4<f64>) -> bool {
    (1..=4).all(|k| m.view((0, 0), (k, k)).determinant() > 0.0)
}

/// A Riemannian metric sampled on every node, with cached inverse and
/// volume density `√det g`.
#[derive(Clone, Debug)]
pub struct MetricField {
    g: Field,
    g_inv: Field,
    vol: Field,
    constant: bool,
}

impl MetricField {
    pub fn new(g: Field) -> Result<Self> {
        g.expect_rank(&Rank::SymTensor)?;
        let grid = *g.grid();
        let nodes = grid.node_count();
        let per_node: Vec<Result<([f64; 10], f64)>> = (0..nodes)
            .into_par_iter()
            .map(|idx| {
                let m = to_na(&sym_to_mat(g.node(idx)));
                if !leading_minors_positive(&m) {
                    return Err(Error::NotPositiveDefinite { node: idx });
                }
                let inv = m.try_inverse().ok_or(Error::NotPositiveDefinite { node: idx })?;
                let inv: [[f64; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|j| inv[(i, j)]));
                Ok((mat_to_sym(&inv), m.determinant().sqrt()))
            })
            .collect();
        let mut inv_values = Vec::with_capacity(nodes * 10);
        let mut vol_values = Vec::with_capacity(nodes);
        for r in per_node {
            let (inv, vol) = r?;
            inv_values.extend_from_slice(&inv);
            vol_values.push(vol);
        }
        let first = g.node(0).to_vec();
        let constant = (0..nodes).all(|k| g.node(k) == first.as_slice());
        Ok(Self {
            g_inv: Field::new(grid, Rank::SymTensor, inv_values)?,
            vol: Field::new(grid, Rank::Scalar, vol_values)?,
            g,
            constant,
        })
    }

    /// The Euclidean metric `δ_ij`.
    pub fn flat(grid: Grid4) -> Self {
        let delta = mat_to_sym(&std::array::from_fn(|i| std::array::from_fn(|j| f64::from(i == j))));
        Self::new(Field::constant(grid, Rank::SymTensor, &delta).expect("finite constant"))
            .expect("identity is positive definite")
    }

    pub fn from_fn(grid: Grid4, f: impl Fn([f64; 4]) -> [[f64; 4]; 4] + Sync) -> Result<Self> {
        let g = Field::from_fn(grid, Rank::SymTensor, |x, out| out.copy_from_slice(&mat_to_sym(&f(x))))?;
        Self::new(g)
    }

    /// `e^{2φ}·δ` on the flat torus.
    pub fn conformally_flat(phi: &Field) -> Result<Self> {
        conformal_metric(phi, &Self::flat(*phi.grid()))
    }

    pub fn grid(&self) -> &Grid4 {
        self.g.grid()
    }

    pub fn g(&self) -> &Field {
        &self.g
    }

    pub fn g_inv(&self) -> &Field {
        &self.g_inv
    }

    pub fn vol(&self) -> &Field {
        &self.vol
    }

    /// True when every node carries the same metric, so that all
    /// Christoffel symbols and curvatures vanish identically.
    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn metric_at(&self, idx: usize) -> [[f64; 4]; 4] {
        sym_to_mat(self.g.node(idx))
    }

    pub fn inverse_at(&self, idx: usize) -> [[f64; 4]; 4] {
        sym_to_mat(self.g_inv.node(idx))
    }

    /// Max over nodes of the largest eigenvalue of `g^{-1}`.
    pub fn max_inverse_eigenvalue(&self) -> f64 {
        (0..self.grid().node_count())
            .into_par_iter()
            .map(|k| {
                let eig = SymmetricEigen::new(to_na(&self.inverse_at(k))).eigenvalues;
                eig.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            })
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }

    /// Max over nodes of `|g·g_inv − Id|`.
    pub fn inverse_defect(&self) -> f64 {
        (0..self.grid().node_count())
            .map(|k| {
                let g = self.metric_at(k);
                let gi = self.inverse_at(k);
                let mut worst: f64 = 0.0;
                for i in 0..4 {
                    for j in 0..4 {
                        let p: f64 = (0..4).map(|m| g[i][m] * gi[m][j]).sum();
                        worst = worst.max((p - f64::from(i == j)).abs());
                    }
                }
                worst
            })
            .fold(0.0, f64::max)
    }
}

/// `e^{2φ}·base`.
pub fn conformal_metric(phi: &Field, base: &MetricField) -> Result<MetricField> {
    phi.expect_rank(&Rank::Scalar)?;
    if phi.grid() != base.grid() {
        return Err(Error::GridMismatch);
    }
    let nodes = base.grid().node_count();
    let mut values = Vec::with_capacity(nodes * 10);
    for k in 0..nodes {
        let p = phi.values()[k];
        if !(p.abs() <= MAX_CONFORMAL_EXPONENT) {
            return Err(Error::ConformalFactorOverflow { node: k, value: p });
        }
        let scale = (2.0 * p).exp();
        values.extend(base.g.node(k).iter().map(|v| v * scale));
    }
    MetricField::new(Field::new(*base.grid(), Rank::SymTensor, values)?)
}

/// `Γ^k_{ij}`, stored as 4 × 10 components per node (`k`, symmetric `(i,j)`).
#[derive(Clone, Debug)]
pub struct ChristoffelField {
    field: Field,
}

impl ChristoffelField {
    pub fn get(&self, idx: usize, k: usize, i: usize, j: usize) -> f64 {
        self.field.values()[idx * 40 + k * 10 + SYM_INDEX[i][j]]
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub(crate) fn node(&self, idx: usize) -> &[f64] {
        self.field.node(idx)
    }
}

/// `Γ^k_{ij} = ½ g^{kl}(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})`.
pub fn christoffels(metric: &MetricField) -> Result<ChristoffelField> {
    let grid = *metric.grid();
    let nodes = grid.node_count();
    if metric.is_constant() {
        return Ok(ChristoffelField { field: Field::zeros(grid, Rank::Mixed(vec![4, 10])) });
    }
    let dg: Vec<Vec<f64>> = (0..4).map(|l| stencil::d1(metric.g.values(), 10, &grid, l)).collect();
    let mut values = vec![0.0; nodes * 40];
    values.par_chunks_mut(40).enumerate().for_each(|(idx, out)| {
        let gi = metric.inverse_at(idx);
        // d[l][p] = ∂_l g_p
        let d = |l: usize, i: usize, j: usize| dg[l][idx * 10 + SYM_INDEX[i][j]];
        for (p, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            let lowered: [f64; 4] = std::array::from_fn(|l| 0.5 * (d(i, j, l) + d(j, i, l) - d(l, i, j)));
            for k in 0..4 {
                out[k * 10 + p] = (0..4).map(|l| gi[k][l] * lowered[l]).sum();
            }
        }
    });
    Ok(ChristoffelField { field: Field::new(grid, Rank::Mixed(vec![4, 40 / 4]), values)? })
}

/// Christoffel symbols with Riemann, Ricci and scalar curvature.
#[derive(Clone, Debug)]
pub struct CurvatureBundle {
    pub gamma: ChristoffelField,
    /// `R^k_{l,(ij)}` for `i < j` in [`PAIRS`] order, 96 components per node.
    pub riem: Field,
    /// Symmetrized `Ric_{ij}`.
    pub ric: Field,
    pub scal: Field,
}

impl CurvatureBundle {
    /// `R^k_{lij}` with antisymmetry in `(i, j)` applied.
    pub fn riemann(&self, idx: usize, k: usize, l: usize, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b, sign) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
        let p = PAIRS.iter().position(|&q| q == (a, b)).expect("pair");
        sign * self.riem.values()[idx * 96 + (k * 4 + l) * 6 + p]
    }

    pub fn ricci_at(&self, idx: usize) -> [[f64; 4]; 4] {
        sym_to_mat(self.ric.node(idx))
    }

    /// Max over nodes of `|S − g^{ij}Ric_{ij}|`.
    pub fn trace_defect(&self, metric: &MetricField) -> f64 {
        (0..metric.grid().node_count())
            .map(|k| {
                let gi = metric.inverse_at(k);
                let ric = self.ricci_at(k);
                let tr: f64 = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| gi[i][j] * ric[i][j]).sum();
                (tr - self.scal.values()[k]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Max over nodes of `|R_{klij} + R_{lkij}|` (lowered first index).
    pub fn pair_antisymmetry_defect(&self, metric: &MetricField) -> f64 {
        (0..metric.grid().node_count())
            .map(|idx| {
                let g = metric.metric_at(idx);
                let lower = |k: usize, l: usize, i: usize, j: usize| -> f64 {
                    (0..4).map(|m| g[k][m] * self.riemann(idx, m, l, i, j)).sum()
                };
                let mut worst: f64 = 0.0;
                for k in 0..4 {
                    for l in 0..4 {
                        for &(i, j) in &PAIRS {
                            worst = worst.max((lower(k, l, i, j) + lower(l, k, i, j)).abs());
                        }
                    }
                }
                worst
            })
            .fold(0.0, f64::max)
    }

    pub fn max_riemann(&self) -> f64 {
        self.riem.max_abs()
    }
}

/// Finite-difference curvature of `metric`, built in stages: Γ, then the
/// Riemann tensor from central differences of Γ, then contractions.
pub fn curvature(metric: &MetricField) -> Result<CurvatureBundle> {
    let grid = *metric.grid();
    let nodes = grid.node_count();
    let gamma = christoffels(metric)?;
    if metric.is_constant() {
        return Ok(CurvatureBundle {
            gamma,
            riem: Field::zeros(grid, Rank::Mixed(vec![4, 4, 6])),
            ric: Field::zeros(grid, Rank::SymTensor),
            scal: Field::zeros(grid, Rank::Scalar),
        });
    }
    let h = grid.spacing();
    let mut riem = vec![0.0; nodes * 96];
    let mut ric = vec![0.0; nodes * 10];
    let mut scal = vec![0.0; nodes];
    riem.par_chunks_mut(96)
        .zip(ric.par_chunks_mut(10))
        .zip(scal.par_iter_mut())
        .enumerate()
        .for_each(|(idx, ((r_out, ric_out), s_out))| {
            let gam = gamma.node(idx);
            let gm = |k: usize, i: usize, j: usize| gam[k * 10 + SYM_INDEX[i][j]];
            // dg[i][k*10+p] = ∂_i Γ^k_p
            let mut dgam = [[0.0; 40]; 4];
            for (i, slot) in dgam.iter_mut().enumerate() {
                let f = gamma.node(grid.shift(idx, i, 1));
                let b = gamma.node(grid.shift(idx, i, -1));
                let inv = 0.5 / h[i];
                for c in 0..40 {
                    slot[c] = (f[c] - b[c]) * inv;
                }
            }
            let dg = |i: usize, k: usize, j: usize, l: usize| dgam[i][k * 10 + SYM_INDEX[j][l]];
            let mut full = [[[[0.0; 4]; 4]; 4]; 4];
            for k in 0..4 {
                for l in 0..4 {
                    for (p, &(i, j)) in PAIRS.iter().enumerate() {
                        let mut v = dg(i, k, j, l) - dg(j, k, i, l);
                        for m in 0..4 {
                            v += gm(k, i, m) * gm(m, j, l) - gm(k, j, m) * gm(m, i, l);
                        }
                        r_out[(k * 4 + l) * 6 + p] = v;
                        full[k][l][i][j] = v;
                        full[k][l][j][i] = -v;
                    }
                }
            }
            let mut r = [[0.0; 4]; 4];
            for l in 0..4 {
                for j in 0..4 {
                    r[l][j] = (0..4).map(|k| full[k][l][k][j]).sum();
                }
            }
            let sym = mat_to_sym(&r);
            ric_out.copy_from_slice(&sym);
            let gi = metric.inverse_at(idx);
            let rs = sym_to_mat(&sym);
            *s_out = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| gi[i][j] * rs[i][j]).sum();
        });
    Ok(CurvatureBundle {
        gamma,
        riem: Field::new(grid, Rank::Mixed(vec![4, 4, 6]), riem)?,
        ric: Field::new(grid, Rank::SymTensor, ric)?,
        scal: Field::new(grid, Rank::Scalar, scal)?,
    })
}

/// A metric together with the cached curvature data every energy and
/// operator evaluation needs.
#[derive(Clone, Debug)]
pub struct Background {
    metric: MetricField,
    curvature: CurvatureBundle,
    /// Quadrature weight `√det g · ∏h` per node.
    pub(crate) weight: Vec<f64>,
    /// `Γ̂^k = g^{ij}Γ^k_{ij}`.
    pub(crate) gamma_trace: Vec<[f64; 4]>,
    /// `Ric^{ij}`, indices raised with `g`.
    pub(crate) ric_up: Vec<[[f64; 4]; 4]>,
    /// `B^{ij} = ⅔ S g^{ij} − 2 Ric^{ij}`, the curvature coupling of ℰ.
    pub(crate) coupling: Vec<[[f64; 4]; 4]>,
    pub(crate) ginv: Vec<[[f64; 4]; 4]>,
}

impl Background {
    pub fn new(metric: MetricField) -> Result<Self> {
        let curvature = curvature(&metric)?;
        let grid = *metric.grid();
        let cell = grid.cell_volume();
        let nodes = grid.node_count();
        let weight = metric.vol.values().iter().map(|v| v * cell).collect();
        let ginv: Vec<[[f64; 4]; 4]> = (0..nodes).map(|k| metric.inverse_at(k)).collect();
        let gamma_trace = (0..nodes)
            .map(|idx| {
                let gi = &ginv[idx];
                std::array::from_fn(|k| {
                    let mut t = 0.0;
                    for i in 0..4 {
                        for j in 0..4 {
                            t += gi[i][j] * curvature.gamma.get(idx, k, i, j);
                        }
                    }
                    t
                })
            })
            .collect();
        let ric_up: Vec<[[f64; 4]; 4]> = (0..nodes)
            .map(|idx| {
                let gi = &ginv[idx];
                let r = curvature.ricci_at(idx);
                let mut up = [[0.0; 4]; 4];
                for i in 0..4 {
                    for j in 0..4 {
                        for k in 0..4 {
                            for l in 0..4 {
                                up[i][j] += gi[i][k] * gi[j][l] * r[k][l];
                            }
                        }
                    }
                }
                up
            })
            .collect();
        let coupling = (0..nodes)
            .map(|idx| {
                let s = curvature.scal.values()[idx];
                std::array::from_fn(|i| {
                    std::array::from_fn(|j| 2.0 / 3.0 * s * ginv[idx][i][j] - 2.0 * ric_up[idx][i][j])
                })
            })
            .collect();
        Ok(Self { metric, curvature, weight, gamma_trace, ric_up, coupling, ginv })
    }

    pub fn flat(grid: Grid4) -> Self {
        Self::new(MetricField::flat(grid)).expect("flat metric")
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn curvature(&self) -> &CurvatureBundle {
        &self.curvature
    }

    pub fn grid(&self) -> &Grid4 {
        self.metric.grid()
    }

    pub fn is_flat(&self) -> bool {
        self.metric.is_constant()
    }

    /// Node-wise constant `c` of the comparison `|ℰ − 𝓕| ≤ c‖du‖²`:
    /// `2·max(|⅔S| + 2|Ric|_op)`, with the operator norm taken with respect to `g`.
    pub fn comparison_constant(&self) -> f64 {
        let worst = (0..self.grid().node_count())
            .map(|idx| {
                let s = self.curvature.scal.values()[idx];
                let mixed = {
                    let gi = &self.ginv[idx];
                    let r = self.curvature.ricci_at(idx);
                    to_na(&std::array::from_fn(|i| std::array::from_fn(|j| (0..4).map(|k| gi[i][k] * r[k][j]).sum())))
                };
                let op = mixed.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
                (2.0 / 3.0 * s).abs() + 2.0 * op
            })
            .fold(0.0, f64::max);
        2.0 * worst
    }
}

/// `κ = (1/12)∫(S² − 3|Ric|²) dv_g`.
pub fn q_total(bg: &Background) -> f64 {
    let curv = &bg.curvature;
    sum_by(bg.grid().node_count(), |idx| {
        let s = curv.scal.values()[idx];
        let r = curv.ricci_at(idx);
        let up = &bg.ric_up[idx];
        let mut norm2 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                norm2 += up[i][j] * r[i][j];
            }
        }
        (s * s - 3.0 * norm2) * bg.weight[idx]
    }) / 12.0
}

/// `∫S dv_g / (∫dv_g)^{1/2}` for this metric; an upper bound for the Yamabe number.
pub fn yamabe_quotient(bg: &Background) -> f64 {
    let n = bg.grid().node_count();
    let total_s = sum_by(n, |k| bg.curvature.scal.values()[k] * bg.weight[k]);
    let volume = sum_by(n, |k| bg.weight[k]);
    total_s / volume.sqrt()
}

/// Max over nodes of `|g^{ij}∇_i Ric_{jk} − ½∂_k S|`, the contracted second
/// Bianchi identity.
pub fn bianchi_defect(bg: &Background) -> f64 {
    let grid = *bg.grid();
    let curv = &bg.curvature;
    let dric: Vec<Vec<f64>> = (0..4).map(|i| stencil::d1(curv.ric.values(), 10, &grid, i)).collect();
    let ds: Vec<Vec<f64>> = (0..4).map(|i| stencil::d1(curv.scal.values(), 1, &grid, i)).collect();
    (0..grid.node_count())
        .into_par_iter()
        .map(|idx| {
            let gi = &bg.ginv[idx];
            let r = curv.ricci_at(idx);
            let gam = |k: usize, i: usize, j: usize| curv.gamma.get(idx, k, i, j);
            let mut worst: f64 = 0.0;
            for k in 0..4 {
                let mut div = 0.0;
                for i in 0..4 {
                    for j in 0..4 {
                        let mut cov = dric[i][idx * 10 + SYM_INDEX[j][k]];
                        for m in 0..4 {
                            cov -= gam(m, i, j) * r[m][k] + gam(m, i, k) * r[j][m];
                        }
                        div += gi[i][j] * cov;
                    }
                }
                worst = worst.max((div - 0.5 * ds[k][idx]).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn flat_metric_has_trivial_caches() {
        let m = MetricField::flat(Grid4::cubic(8, 1.0).unwrap());
        assert!(m.is_constant());
        assert_eq!(m.inverse_defect(), 0.0);
        assert!(m.vol().values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_indefinite_metric() {
        let grid = Grid4::cubic(8, 1.0).unwrap();
        let bad = MetricField::from_fn(grid, |_| {
            let mut m = [[0.0; 4]; 4];
            for i in 0..4 {
                m[i][i] = 1.0;
            }
            m[2][2] = -1.0;
            m
        });
        assert!(matches!(bad, Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn conformal_examples() {
        let grid = Grid4::cubic(8, 1.0).unwrap();
        let flat = MetricField::flat(grid);
        let zero = Field::zeros(grid, Rank::Scalar);
        let same = conformal_metric(&zero, &flat).unwrap();
        assert_eq!(same.g().values(), flat.g().values());

        let c = 0.3;
        let scaled = conformal_metric(&Field::constant(grid, Rank::Scalar, &[c]).unwrap(), &flat).unwrap();
        for &v in scaled.vol().values() {
            assert!((v - (4.0 * c).exp()).abs() < 1e-12);
        }

        let wavy = Field::scalar_from_fn(grid, |x| 0.2 * (2.0 * PI * x[0]).sin()).unwrap();
        assert!(conformal_metric(&wavy, &flat).is_ok());

        let huge = Field::constant(grid, Rank::Scalar, &[25.0]).unwrap();
        assert!(matches!(conformal_metric(&huge, &flat), Err(Error::ConformalFactorOverflow { .. })));
    }

    #[test]
    fn constant_scaling_is_flat() {
        let grid = Grid4::cubic(8, 1.0).unwrap();
        let m = MetricField::conformally_flat(&Field::constant(grid, Rank::Scalar, &[0.7]).unwrap()).unwrap();
        let bg = Background::new(m).unwrap();
        assert!(bg.curvature().max_riemann() <= 1e-10);
        assert_eq!(q_total(&bg), 0.0);
        assert_eq!(yamabe_quotient(&bg), 0.0);
    }

    #[test]
    fn product_metric_only_gamma_000() {
        let grid = Grid4::cubic(16, 1.0).unwrap();
        let m = MetricField::from_fn(grid, |x| {
            let mut g = [[0.0; 4]; 4];
            for i in 0..4 {
                g[i][i] = 1.0;
            }
            g[0][0] = 1.0 + 0.3 * (2.0 * PI * x[0]).sin();
            g
        })
        .unwrap();
        let gamma = christoffels(&m).unwrap();
        let mut nonzero_000: f64 = 0.0;
        for idx in 0..grid.node_count() {
            for k in 0..4 {
                for (i, j) in SYM_PAIRS {
                    let v = gamma.get(idx, k, i, j);
                    if (k, i, j) == (0, 0, 0) {
                        nonzero_000 = nonzero_000.max(v.abs());
                    } else {
                        assert_eq!(v, 0.0);
                    }
                }
            }
        }
        assert!(nonzero_000 > 0.1);
    }

    #[test]
    fn scalar_is_trace_of_ricci() {
        let grid = Grid4::cubic(8, 1.0).unwrap();
        let phi = Field::scalar_from_fn(grid, |x| 0.2 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[2]).cos()).unwrap();
        let m = MetricField::conformally_flat(&phi).unwrap();
        let curv = curvature(&m).unwrap();
        assert!(curv.trace_defect(&m) < 1e-12);
    }
}
