//! The `check` suite: assertable invariants evaluated on a configured scenario.
//!
//! Structural checks hold to round-off on any grid. Discretization checks
//! carry the desk-scale tolerances and are meaningful from 16⁴ upward.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use cflow_core::energy::{bochner_terms, energy_report, gradient_check, c_harmonic_operator};
use cflow_core::flow::{run_flow, FlowConfig};
use cflow_core::geometry::{conformal_metric, curvature, q_total, yamabe_quotient};
use cflow_core::grid::{diff, integrate};
use cflow_core::maps::{adjoint_div, connection_on_section, differential, hessian_norms, one_form_inner, section_inner, tension};
use cflow_core::sampling::smooth_field;
use cflow_core::spectral::spectral_solve_bilaplacian;
use cflow_core::{container, Background, Field, Grid4, MapField, MetricField, PullbackOneForm, Rank, Section, SpaceForm};

use crate::config::Scenario;
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Structural,
    Discretization,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

/// `value ≤ bound`, or `value ≥ bound` when `lower` is set.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub kind: CheckKind,
    pub value: f64,
    pub bound: f64,
    pub lower: bool,
    pub status: Status,
    pub note: String,
}

impl CheckResult {
    fn measured(name: &'static str, kind: CheckKind, value: f64, bound: f64, lower: bool) -> Self {
        let ok = if lower { value >= bound } else { value <= bound };
        let status = if ok && value.is_finite() { Status::Pass } else { Status::Fail };
        Self { name, kind, value, bound, lower, status, note: String::new() }
    }

    fn skipped(name: &'static str, kind: CheckKind, why: &str) -> Self {
        Self { name, kind, value: f64::NAN, bound: f64::NAN, lower: false, status: Status::Skip, note: why.into() }
    }

    fn failed(name: &'static str, kind: CheckKind, why: String) -> Self {
        Self { name, kind, value: f64::NAN, bound: f64::NAN, lower: false, status: Status::Fail, note: why }
    }
}

pub struct CheckReport {
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.status != Status::Fail)
    }

    pub fn table(&self) -> String {
        let width = self.results.iter().map(|r| r.name.len()).max().unwrap_or(4).max(5);
        let mut out = format!("{:<width$}  {:<14}  {:>12}  {:>2}  {:>10}  status\n", "check", "kind", "value", "", "bound");
        for r in &self.results {
            let kind = match r.kind {
                CheckKind::Structural => "structural",
                CheckKind::Discretization => "discretization",
            };
            let rel = if r.status == Status::Skip || r.bound.is_nan() {
                "  "
            } else if r.lower {
                ">="
            } else {
                "<="
            };
            out.push_str(&format!(
                "{:<width$}  {:<14}  {:>12.4e}  {rel}  {:>10.2e}  {}",
                r.name, kind, r.value, r.bound, r.status
            ));
            if !r.note.is_empty() {
                out.push_str(&format!("  ({})", r.note));
            }
            out.push('\n');
        }
        let failed = self.results.iter().filter(|r| r.status == Status::Fail).count();
        out.push_str(&format!("{} checks, {} failed\n", self.results.len(), failed));
        out
    }
}

use CheckKind::{Discretization as D, Structural as S};

type Measure = Result<f64, CliError>;

fn run(name: &'static str, kind: CheckKind, bound: f64, lower: bool, f: impl FnOnce() -> Measure) -> CheckResult {
    match f() {
        Ok(v) => CheckResult::measured(name, kind, v, bound, lower),
        Err(e) => CheckResult::failed(name, kind, e.to_string()),
    }
}

/// Seeded inputs shared by the checks.
struct Fixture<'a> {
    sc: &'a Scenario,
    /// `u₀` plus a smooth random displacement.
    u_rand: MapField,
    rng: ChaCha8Rng,
}

impl<'a> Fixture<'a> {
    fn new(sc: &'a Scenario) -> Result<Self, CliError> {
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        let u0 = &sc.initial_map;
        let n = u0.dim();
        let amplitude = match sc.target.periods() {
            Some(p) => 0.05 * p.iter().cloned().fold(f64::INFINITY, f64::min),
            None => {
                let r = (0..sc.grid.node_count())
                    .map(|k| u0.point(k).iter().map(|v| v * v).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                0.3 * (1.0 - r) / (n as f64).sqrt()
            }
        };
        let bump = smooth_field(sc.grid, Rank::Target(n), amplitude, 2, 4, &mut rng)?;
        let values = u0.disp().values().iter().zip(bump.values()).map(|(a, b)| a + b).collect();
        Ok(Self { sc, u_rand: u0.with_disp(values)?, rng })
    }

    fn section(&mut self, amplitude: f64) -> Result<Section, CliError> {
        let grid = self.sc.grid;
        let n = self.sc.target.dim();
        let noise = smooth_field(grid, Rank::Target(n), amplitude, 2, 4, &mut self.rng)?;
        // A localized all-mode bump keeps dℰ(v) away from zero.
        let c: [f64; 4] = std::array::from_fn(|_| self.rng.gen_range(0.0..1.0));
        let lengths = grid.lengths();
        let bump = Field::from_fn(grid, Rank::Target(n), |x, out| {
            let mut b = amplitude;
            for i in 0..4 {
                b *= (0.5 + 0.5 * (2.0 * std::f64::consts::PI * (x[i] / lengths[i] - c[i])).cos()).powi(4);
            }
            out.fill(b);
        })?;
        let values = noise.values().iter().zip(bump.values()).map(|(a, b)| a + b).collect();
        Ok(Section::new(Field::new(grid, Rank::Target(n), values)?)?)
    }

    fn random_point(&mut self) -> Vec<f64> {
        let t = &self.sc.target;
        let n = t.dim();
        match t.periods() {
            Some(p) => p.iter().map(|p| self.rng.gen_range(0.0..*p)).collect(),
            None => {
                let v: Vec<f64> = (0..n).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
                let r = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                let radius = 0.7 * self.rng.gen_range(0.0f64..1.0).powf(1.0 / n as f64);
                v.iter().map(|x| x * radius / r).collect()
            }
        }
    }

    fn random_vector(&mut self) -> Vec<f64> {
        (0..self.sc.target.dim()).map(|_| self.rng.gen_range(-1.0..1.0)).collect()
    }
}

pub fn run_checks(sc: &Scenario) -> Result<CheckReport, CliError> {
    let mut fx = Fixture::new(sc)?;
    let bg = &sc.background;
    let grid = sc.grid;
    let flat_metric = bg.is_flat();
    let torus = sc.target.is_flat();
    let mut results = Vec::new();

    let scalar = smooth_field(grid, Rank::Scalar, 1.0, 3, 4, &mut fx.rng)?;
    results.push(run("grid.translation_commutes", S, 0.0, false, || translation_defect(&scalar)));
    results.push(run("grid.divergence_theorem", S, 1e-10, false, || divergence_defect(&scalar)));

    results.push(run("geometry.metric_inverse", S, 1e-12, false, || Ok(bg.metric().inverse_defect())));
    results.push(run("geometry.scalar_is_ricci_trace", S, 1e-12, false, || {
        Ok(bg.curvature().trace_defect(bg.metric()))
    }));
    results.push(run("geometry.constant_rescaling_is_flat", S, 1e-10, false, || {
        let phi = Field::scalar_from_fn(grid, |_| 0.3)?;
        Ok(curvature(&conformal_metric(&phi, &MetricField::flat(grid))?)?.max_riemann())
    }));
    if flat_metric {
        results.push(run("geometry.flat_kappa", S, 1e-10, false, || Ok(q_total(bg).abs())));
        results.push(run("geometry.flat_yamabe_quotient", S, 1e-10, false, || Ok(yamabe_quotient(bg).abs())));
    } else {
        results.push(CheckResult::skipped("geometry.flat_kappa", S, "metric not flat"));
        results.push(CheckResult::skipped("geometry.flat_yamabe_quotient", S, "metric not flat"));
    }

    let samples: Vec<[Vec<f64>; 5]> = (0..1000)
        .map(|_| [fx.random_point(), fx.random_vector(), fx.random_vector(), fx.random_vector(), fx.random_vector()])
        .collect();
    results.push(run("target.curvature_antisymmetry", S, 1e-12, false, || curvature_symmetry(&sc.target, &samples)));
    results.push(run("target.sectional_nonpositive", S, 1e-12, false, || max_sectional(&sc.target, &samples)));
    results.push(run("target.christoffel_vs_finite_difference", D, 1e-7, false, || {
        christoffel_defect(&sc.target, &samples[..50])
    }));

    let s = fx.section(0.1)?;
    let omega = PullbackOneForm::new(smooth_field(grid, Rank::Mixed(vec![4, sc.target.dim()]), 0.1, 2, 4, &mut fx.rng)?)?;
    let v = fx.section(0.1)?;
    let maps = [&sc.initial_map, &fx.u_rand];
    results.push(run("maps.trace_free_gap", S, -1e-10, true, || {
        let mut worst = f64::INFINITY;
        for u in maps {
            worst = worst.min(hessian_norms(u, bg)?.min_trace_free_gap());
        }
        Ok(worst)
    }));
    results.push(run("maps.trace_free_identity", S, 1e-10, false, || {
        let mut worst: f64 = 0.0;
        for u in maps {
            let h = hessian_norms(u, bg)?;
            let scale = h.hessian.iter().cloned().fold(1.0, f64::max);
            worst = worst.max(h.identity_defect() / scale);
        }
        Ok(worst)
    }));
    if torus {
        results.push(run("maps.rewrap_invariance", S, 1e-10, false, || rewrap_defect(&fx.u_rand)));
        let affine = MapField::affine(grid, sc.target.clone(), affine_class(sc))?;
        let flat_bg = Background::flat(grid);
        results.push(run("maps.affine_tension_vanishes", S, 1e-10, false, || {
            Ok(tension(&affine, &flat_bg)?.max_abs())
        }));
        results.push(run("energy.affine_operator_vanishes", S, 1e-10, false, || {
            Ok(c_harmonic_operator(&affine, &flat_bg)?.max_abs())
        }));
    } else {
        for name in ["maps.rewrap_invariance", "maps.affine_tension_vanishes", "energy.affine_operator_vanishes"] {
            results.push(CheckResult::skipped(name, S, "ball target"));
        }
    }
    results.push(run("maps.adjoint_identity", S, 1e-10, false, || {
        let u = &fx.u_rand;
        let lhs = section_inner(u, bg, &adjoint_div(u, &omega, bg)?, &s)?;
        let rhs = one_form_inner(u, bg, &omega, &connection_on_section(u, &s)?)?;
        Ok((lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1e-300))
    }));

    if flat_metric {
        results.push(run("energy.biharmonic_reduction", S, 1e-12, false, || {
            let mut worst: f64 = 0.0;
            for u in maps {
                let r = energy_report(u, bg)?;
                worst = worst.max((r.conformal - r.biharmonic).abs() / (1.0 + r.biharmonic.abs()));
            }
            Ok(worst)
        }));
    } else {
        results.push(run("energy.functional_comparison", D, 1.0, false, || {
            let c = bg.comparison_constant();
            let mut worst: f64 = 0.0;
            for u in maps {
                let r = energy_report(u, bg)?;
                worst = worst.max((r.conformal - r.biharmonic).abs() / (c * r.dirichlet).max(1e-300));
            }
            Ok(worst)
        }));
    }
    results.push(run("energy.gradient_check", D, 1e-3, false, || {
        Ok(gradient_check(&fx.u_rand, bg, &v, 1e-4)?.rel_error)
    }));
    let (bochner_kind, bochner_bound) = if flat_metric { (S, 1e-9) } else { (D, 5e-3) };
    results.push(run("energy.bochner_residual", bochner_kind, bochner_bound, false, || {
        Ok(bochner_terms(&fx.u_rand, bg)?.residual)
    }));

    let short = FlowConfig { t_max: 1e300, grad_tol: 1e-300, max_steps: Some(10), snapshot_every: 0, monitor_every: 1, ..sc.flow };
    match run_flow(fx.u_rand.clone(), bg, &short) {
        Ok(out) => {
            let h = &out.state.history;
            let rise = h
                .windows(2)
                .map(|w| (w[1].energy - w[0].energy) / w[0].energy.abs().max(f64::MIN_POSITIVE))
                .fold(f64::NEG_INFINITY, f64::max);
            results.push(CheckResult::measured("flow.energy_monotone", S, rise, 10.0 * f64::EPSILON, false));
            let class_kept = out.state.u.linear_part() == fx.u_rand.linear_part();
            let mut r = CheckResult::measured("flow.linear_part_preserved", S, f64::from(u8::from(!class_kept)), 0.0, false);
            if out.divergence.is_some() {
                r.note = "diverged".into();
                r.status = Status::Fail;
            }
            results.push(r);
            let res = h.iter().map(|r| r.identity_residual).fold(0.0, f64::max);
            results.push(CheckResult::measured("flow.identity_residual", D, res, 1e-2, false));
        }
        Err(e) => {
            for name in ["flow.energy_monotone", "flow.linear_part_preserved", "flow.identity_residual"] {
                results.push(CheckResult::failed(name, S, e.to_string()));
            }
        }
    }

    if flat_metric && is_identity(&bg.metric().inverse_at(0)) {
        results.push(run("spectral.bilaplacian_solve_residual", S, 1e-10, false, || {
            bilaplacian_residual(grid, &mut fx.rng)
        }));
    } else {
        results.push(CheckResult::skipped("spectral.bilaplacian_solve_residual", S, "metric not the identity"));
    }
    results.push(run("container.round_trip", S, 0.0, false, || {
        let field = fx.u_rand.disp();
        let mut buf = Vec::new();
        container::write_field(&mut buf, field)?;
        let back = container::read_field(buf.as_slice())?;
        let same = back == *field && back.values().iter().zip(field.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        Ok(if same { 0.0 } else { 1.0 })
    }));
    Ok(CheckReport { results })
}

fn is_identity(m: &[[f64; 4]; 4]) -> bool {
    (0..4).all(|i| (0..4).all(|j| m[i][j] == if i == j { 1.0 } else { 0.0 }))
}

fn affine_class(sc: &Scenario) -> Vec<[i64; 4]> {
    let a = sc.initial_map.linear_part();
    if a.iter().flatten().any(|&v| v != 0) {
        return a.to_vec();
    }
    (0..sc.target.dim()).map(|r| std::array::from_fn(|i| i64::from(i == r % 4))).collect()
}

/// `max |D_i(f∘T_j) − (D_i f)∘T_j|` over axis pairs, `T_j` the unit shift.
fn translation_defect(f: &Field) -> Measure {
    let grid = *f.grid();
    let shifted = |g: &Field, axis: usize| -> Result<Field, CliError> {
        let v = (0..grid.node_count()).map(|k| g.values()[grid.shift(k, axis, 1)]).collect();
        Ok(Field::new(grid, Rank::Scalar, v)?)
    };
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        let d = diff(f, i, 1)?;
        for j in 0..4 {
            let a = diff(&shifted(f, j)?, i, 1)?;
            let b = shifted(&d, j)?;
            worst = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
        }
    }
    Ok(worst)
}

fn divergence_defect(f: &Field) -> Measure {
    let grid = *f.grid();
    let ones = Field::scalar_from_fn(grid, |_| 1.0)?;
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        let d = diff(f, i, 1)?;
        let abs = Field::new(grid, Rank::Scalar, d.values().iter().map(|v| v.abs()).collect())?;
        worst = worst.max(integrate(&d, &ones)?.abs() / integrate(&abs, &ones)?.max(1e-300));
    }
    Ok(worst)
}

fn curvature_symmetry(t: &SpaceForm, samples: &[[Vec<f64>; 5]]) -> Measure {
    let mut worst: f64 = 0.0;
    for [y, x, yv, z, w] in samples {
        let a = t.curv_op(y, x, yv, z)?;
        let b = t.curv_op(y, yv, x, z)?;
        let scale = t.metric_h(y)?[0][0] * norm(x) * norm(yv) * norm(z) + 1e-300;
        worst = worst.max(a.iter().zip(&b).map(|(p, q)| (p + q).abs()).fold(0.0, f64::max) / scale);
        let rw = t.inner(y, &a, w)?;
        let rz = t.inner(y, &t.curv_op(y, x, yv, w)?, z)?;
        worst = worst.max((rw + rz).abs() / (scale * t.metric_h(y)?[0][0] * norm(w)));
    }
    Ok(worst)
}

/// Max of `⟨R(X,Z)Z,X⟩ / (|X|²|Z|²)`.
fn max_sectional(t: &SpaceForm, samples: &[[Vec<f64>; 5]]) -> Measure {
    let mut worst = f64::NEG_INFINITY;
    for [y, x, z, ..] in samples {
        let r = t.inner(y, &t.curv_op(y, x, z, z)?, x)?;
        let scale = t.inner(y, x, x)? * t.inner(y, z, z)? + 1e-300;
        worst = worst.max(r / scale);
    }
    Ok(worst)
}

/// `Γ^a_{bc} = ½h^{ad}(∂_b h_dc + ∂_c h_db − ∂_d h_bc)` from central
/// differences of `metric_h`, against the closed form; relative max error.
fn christoffel_defect(t: &SpaceForm, samples: &[[Vec<f64>; 5]]) -> Measure {
    let n = t.dim();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for [y, ..] in samples {
        let dh: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|e| {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[e] += eps;
                ym[e] -= eps;
                let hp = t.metric_h(&yp)?;
                let hm = t.metric_h(&ym)?;
                Ok((0..n).map(|a| (0..n).map(|b| (hp[a][b] - hm[a][b]) / (2.0 * eps)).collect()).collect())
            })
            .collect::<Result<_, CliError>>()?;
        let h = t.metric_h(y)?;
        let closed = t.christoffel_n(y)?;
        let scale = closed.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for a in 0..n {
            // h is conformal to the identity
            let hinv = 1.0 / h[a][a];
            for b in 0..n {
                for c in 0..n {
                    let fd = 0.5 * hinv * (dh[b][a][c] + dh[c][a][b] - dh[a][b][c]);
                    worst = worst.max((fd - closed[(a * n + b) * n + c]).abs() / scale);
                }
            }
        }
    }
    Ok(worst)
}

fn rewrap_defect(u: &MapField) -> Measure {
    let periods = u.target().periods().expect("torus").to_vec();
    let n = u.dim();
    let shifted: Vec<f64> = u.disp().values().iter().enumerate().map(|(k, v)| v + 3.0 * periods[k % n]).collect();
    let v = u.with_disp(shifted)?;
    let a = differential(u);
    let b = differential(&v);
    let scale = a.max_abs().max(1.0);
    Ok(a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale)
}

/// `‖(Id + αΔ²)w − f‖_∞ / ‖f‖_∞` for the spectral solution `w`.
fn bilaplacian_residual(grid: Grid4, rng: &mut ChaCha8Rng) -> Measure {
    let f = smooth_field(grid, Rank::Target(2), 1.0, 3, 4, rng)?;
    let alpha = 1e-2 * grid.min_spacing().powi(4);
    let w = spectral_solve_bilaplacian(&f, alpha)?;
    let lap = |x: &Field| -> Result<Field, CliError> {
        let mut acc = vec![0.0; x.values().len()];
        for i in 0..4 {
            for (a, d) in acc.iter_mut().zip(diff(x, i, 2)?.values()) {
                *a += d;
            }
        }
        Ok(Field::new(*x.grid(), x.rank().clone(), acc)?)
    };
    let bilap = lap(&lap(&w)?)?;
    let num = w
        .values()
        .iter()
        .zip(bilap.values())
        .zip(f.values())
        .map(|((a, b), c)| (a + alpha * b - c).abs())
        .fold(0.0, f64::max);
    Ok(num / f.max_abs())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
