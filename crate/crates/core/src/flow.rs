//! Time integration of `∂_t u = −𝓛(u)` with dissipation diagnostics.
//!
//! Along an exact flow `ℰ(u(t)) + 2∫₀ᵗ‖𝓛(u)‖² = ℰ(u₀)`; the monitor
//! integrates the right-hand term by the trapezoid rule over monitor points
//! and reports the defect of this identity.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::energy::{c_harmonic_operator, energy_report};
use crate::error::{Error, Result};
use crate::geometry::Background;
use crate::grid::sum_by;
use crate::maps::{MapField, Section};
use crate::spectral::solve_bilaplacian;

/// Explicit time-step constant: the flat bi-Laplacian symbol is at most `16/h⁴`.
pub const STABILITY_CONSTANT: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepPolicy {
    Explicit { cfl: f64, integrator: Integrator },
    Imex { dt: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub policy: StepPolicy,
    pub t_max: f64,
    /// Stop once `‖𝓛(u)‖_∞ < grad_tol`.
    pub grad_tol: f64,
    /// Optional hard cap on the number of steps.
    pub max_steps: Option<usize>,
    /// Steps between snapshots; 0 disables snapshots.
    pub snapshot_every: usize,
    pub monitor_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            policy: StepPolicy::Explicit { cfl: 0.4, integrator: Integrator::Rk4 },
            t_max: 1.0,
            grad_tol: 1e-6,
            max_steps: None,
            snapshot_every: 0,
            monitor_every: 10,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidFlowConfig(m));
        match self.policy {
            StepPolicy::Explicit { cfl, .. } if !(cfl > 0.0 && cfl <= 1.0) => return bad(format!("cfl = {cfl} not in (0, 1]")),
            StepPolicy::Imex { dt } if !(dt > 0.0 && dt.is_finite()) => return bad(format!("dt = {dt} must be positive")),
            _ => {}
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max = {} must be positive", self.t_max));
        }
        if !(self.grad_tol > 0.0 && self.grad_tol.is_finite()) {
            return bad(format!("grad_tol = {} must be positive", self.grad_tol));
        }
        if self.monitor_every == 0 {
            return bad("monitor_every must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub energy: f64,
    /// Running `2∫₀ᵗ‖∂_t u‖²`.
    pub dissipation_integral: f64,
    pub dirichlet: f64,
    pub hessian: f64,
    pub quartic: f64,
    pub grad_norm: f64,
    pub identity_residual: f64,
}

impl DiagnosticsRecord {
    fn is_finite(&self) -> bool {
        [
            self.t,
            self.energy,
            self.dissipation_integral,
            self.dirichlet,
            self.hessian,
            self.quartic,
            self.grad_norm,
            self.identity_residual,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

pub const CSV_HEADER: &str = "t,energy,dissipation_integral,dirichlet,hessian,quartic,grad_norm,identity_residual";

pub fn write_csv<W: Write>(mut w: W, history: &[DiagnosticsRecord]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in history {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.t, r.energy, r.dissipation_integral, r.dirichlet, r.hessian, r.quartic, r.grad_norm, r.identity_residual
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub u: MapField,
    pub t: f64,
    pub step: usize,
    pub history: Vec<DiagnosticsRecord>,
    energy0: f64,
    /// `(t, ‖𝓛‖²)` at the last accrual.
    last_rate: (f64, f64),
    dissipation: f64,
    /// `𝓛(u)` for the current `u`, if already known.
    pending: Option<Section>,
}

impl FlowState {
    /// Starts a flow at `t = 0` and records the initial diagnostics.
    pub fn new(u0: MapField, bg: &Background) -> Result<Self> {
        let mut state = Self {
            u: u0,
            t: 0.0,
            step: 0,
            history: Vec::new(),
            energy0: 0.0,
            last_rate: (0.0, 0.0),
            dissipation: 0.0,
            pending: None,
        };
        monitor(&mut state, bg)?;
        Ok(state)
    }

    pub fn initial_energy(&self) -> f64 {
        self.energy0
    }

    fn operator(&mut self, bg: &Background) -> Result<Section> {
        match self.pending.take() {
            Some(l) => Ok(l),
            None => c_harmonic_operator(&self.u, bg),
        }
    }
}

/// `max_x |𝓛(x)|_h`.
pub fn grad_norm(u: &MapField, l: &Section) -> f64 {
    let n = u.dim();
    (0..u.grid().node_count())
        .map(|k| {
            let v = &l.values()[k * n..(k + 1) * n];
            (u.target().factor(u.point(k)) * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
        })
        .fold(0.0, f64::max)
}

fn l2_norm2(u: &MapField, bg: &Background, l: &Section) -> f64 {
    let n = u.dim();
    let w = bg.weight.as_slice();
    sum_by(u.grid().node_count(), |k| {
        let v = &l.values()[k * n..(k + 1) * n];
        w[k] * u.target().factor(u.point(k)) * v.iter().map(|x| x * x).sum::<f64>()
    })
}

/// Advances the dissipation integral to `state.t` by the trapezoid rule.
fn accrue(state: &mut FlowState, bg: &Background, l: &Section) {
    let (t0, r0) = state.last_rate;
    if state.t > t0 || state.step == 0 {
        let rate = l2_norm2(&state.u, bg, l);
        state.dissipation += (state.t - t0) * (rate + r0);
        state.last_rate = (state.t, rate);
    }
}

/// Appends a diagnostics record for the current state.
pub fn monitor(state: &mut FlowState, bg: &Background) -> Result<DiagnosticsRecord> {
    let report = energy_report(&state.u, bg)?;
    let l = state.operator(bg)?;
    if state.history.is_empty() {
        state.energy0 = report.conformal;
    }
    accrue(state, bg, &l);
    let record = DiagnosticsRecord {
        t: state.t,
        energy: report.conformal,
        dissipation_integral: state.dissipation,
        dirichlet: report.dirichlet,
        hessian: report.hessian,
        quartic: report.quartic,
        grad_norm: grad_norm(&state.u, &l),
        identity_residual: (report.conformal + state.dissipation - state.energy0).abs() / (state.energy0.abs() + 1.0),
    };
    state.pending = Some(l);
    if !record.is_finite() {
        return Err(Error::NonFinite { what: "diagnostics", node: 0 });
    }
    state.history.push(record);
    Ok(record)
}

/// `dt = cfl·h_min⁴/(16·λ_g)` with `λ_g = (max eigenvalue of g⁻¹)²`.
pub fn explicit_dt(bg: &Background, cfl: f64) -> f64 {
    let h = bg.grid().min_spacing();
    let lam = bg.metric().max_inverse_eigenvalue().powi(2);
    cfl * h.powi(4) / (STABILITY_CONSTANT * lam)
}

fn axpy(u: &MapField, l: &Section, scale: f64) -> Result<MapField> {
    u.perturbed(l, scale)
}

/// One explicit step of size `dt`; `k1`, if given, must be `𝓛(u)`.
pub fn step_explicit(
    u: &MapField,
    bg: &Background,
    dt: f64,
    integrator: Integrator,
    k1: Option<Section>,
) -> Result<MapField> {
    let k1 = match k1 {
        Some(k) => k,
        None => c_harmonic_operator(u, bg)?,
    };
    match integrator {
        Integrator::Euler => axpy(u, &k1, -dt),
        Integrator::Rk4 => {
            let k2 = c_harmonic_operator(&axpy(u, &k1, -0.5 * dt)?, bg)?;
            let k3 = c_harmonic_operator(&axpy(u, &k2, -0.5 * dt)?, bg)?;
            let k4 = c_harmonic_operator(&axpy(u, &k3, -dt)?, bg)?;
            let combo: Vec<f64> = (0..k1.values().len())
                .map(|i| (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i]) / 6.0)
                .collect();
            let combo = Section::new(crate::grid::Field::new(*u.grid(), k1.field().rank().clone(), combo)?)?;
            axpy(u, &combo, -dt)
        }
    }
}

/// `u' = u − dt(Id + dt·Δ₀²)⁻¹𝓛(u)`, the linearly implicit step that treats
/// the leading bi-Laplacian implicitly. Requires a constant metric.
pub fn step_imex(u: &MapField, bg: &Background, dt: f64, k1: Option<Section>) -> Result<MapField> {
    if !bg.is_flat() {
        return Err(Error::Unsupported("IMEX steps need a constant background metric".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt = {dt} must be positive")));
    }
    let l = match k1 {
        Some(k) => k,
        None => c_harmonic_operator(u, bg)?,
    };
    let ginv = bg.metric().inverse_at(0);
    let solved = solve_bilaplacian(l.values(), u.dim(), u.grid(), dt, &ginv)?;
    let delta = Section::new(crate::grid::Field::new(*u.grid(), l.field().rank().clone(), solved)?)?;
    axpy(u, &delta, -dt)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    Converged,
    TimeUp,
    Diverged,
}

#[derive(Clone, Debug)]
pub struct FlowOutcome {
    /// Final state; on divergence, the last valid state.
    pub state: FlowState,
    pub reason: ExitReason,
    /// Why the flow diverged, if it did.
    pub divergence: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub exit_reason: ExitReason,
    pub t_final: f64,
    pub energy_final: f64,
    pub grad_norm_final: f64,
}

impl FlowOutcome {
    pub fn summary(&self) -> FlowSummary {
        let last = self.state.history.last().copied();
        FlowSummary {
            exit_reason: self.reason.clone(),
            t_final: self.state.t,
            energy_final: last.map_or(f64::NAN, |r| r.energy),
            grad_norm_final: last.map_or(f64::NAN, |r| r.grad_norm),
        }
    }
}

pub fn run_flow(u0: MapField, bg: &Background, cfg: &FlowConfig) -> Result<FlowOutcome> {
    run_flow_with(u0, bg, cfg, |_| Ok(()))
}

/// [`run_flow`] calling `on_snapshot` every `snapshot_every` steps.
pub fn run_flow_with(
    u0: MapField,
    bg: &Background,
    cfg: &FlowConfig,
    mut on_snapshot: impl FnMut(&FlowState) -> Result<()>,
) -> Result<FlowOutcome> {
    cfg.validate()?;
    let class = u0.linear_part().to_vec();
    let mut state = FlowState::new(u0, bg)?;
    let base_dt = match cfg.policy {
        StepPolicy::Explicit { cfl, .. } => explicit_dt(bg, cfl),
        StepPolicy::Imex { dt } => dt,
    };
    loop {
        let l = state.operator(bg)?;
        accrue(&mut state, bg, &l);
        let gn = grad_norm(&state.u, &l);
        let monitored_now = state.history.last().is_some_and(|r| r.t == state.t);
        if gn < cfg.grad_tol || state.t >= cfg.t_max || cfg.max_steps.is_some_and(|m| state.step >= m) {
            state.pending = Some(l);
            if !monitored_now {
                monitor(&mut state, bg)?;
            }
            let reason = if gn < cfg.grad_tol { ExitReason::Converged } else { ExitReason::TimeUp };
            return Ok(FlowOutcome { state, reason, divergence: None });
        }
        let dt = base_dt.min(cfg.t_max - state.t);
        let next = match cfg.policy {
            StepPolicy::Explicit { integrator, .. } => step_explicit(&state.u, bg, dt, integrator, Some(l)),
            StepPolicy::Imex { .. } => step_imex(&state.u, bg, dt, Some(l)),
        };
        let next = match next {
            Ok(u) => u,
            Err(e @ (Error::ChartViolation { .. } | Error::NonFinite { .. } | Error::InvalidArgument(_))) => {
                return Ok(FlowOutcome { state, reason: ExitReason::Diverged, divergence: Some(e.to_string()) });
            }
            Err(e) => return Err(e),
        };
        if next.linear_part() != class.as_slice() {
            return Err(Error::InvalidMap("linear part changed during the flow".into()));
        }
        let previous = state.clone();
        state.u = next;
        state.t += dt;
        state.step += 1;
        state.pending = None;
        if state.step % cfg.monitor_every == 0 {
            if let Err(e) = monitor(&mut state, bg) {
                return Ok(FlowOutcome { state: previous, reason: ExitReason::Diverged, divergence: Some(e.to_string()) });
            }
        }
        if cfg.snapshot_every > 0 && state.step % cfg.snapshot_every == 0 {
            on_snapshot(&state)?;
        }
    }
}

/// Suprema of the monitored bounds over a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaBounds {
    /// `sup ‖du‖² + 2∫‖∂_t u‖²`
    pub dirichlet_plus_dissipation: f64,
    /// `sup ∫|∇̃du|²`
    pub hessian: f64,
    /// `sup ∫|du|⁴`
    pub quartic: f64,
    /// `∫|∇̃du|²` never increases after the first quarter of the records.
    pub hessian_tail_nonincreasing: bool,
    /// `∫|du|⁴` never increases after the first quarter of the records.
    pub quartic_tail_nonincreasing: bool,
}

pub fn lemma_bounds(history: &[DiagnosticsRecord]) -> LemmaBounds {
    let sup = |f: fn(&DiagnosticsRecord) -> f64| history.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let tail = &history[history.len() / 4..];
    let tail_ok = |f: fn(&DiagnosticsRecord) -> f64| {
        tail.windows(2).all(|w| f(&w[1]) <= f(&w[0]) + 1e-12 * f(&w[0]).abs())
    };
    LemmaBounds {
        dirichlet_plus_dissipation: sup(|r| r.dirichlet + r.dissipation_integral),
        hessian: sup(|r| r.hessian),
        quartic: sup(|r| r.quartic),
        hessian_tail_nonincreasing: tail_ok(|r| r.hessian),
        quartic_tail_nonincreasing: tail_ok(|r| r.quartic),
    }
}
