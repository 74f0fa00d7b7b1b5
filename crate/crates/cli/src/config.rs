//! Run configuration: JSON ingestion, validation, scenario construction.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cflow_core::flow::{FlowConfig, Integrator, StepPolicy};
use cflow_core::{Background, Field, Grid4, MapField, MetricField, Rank, SpaceForm};

use crate::error::CliError;
use crate::expr::Expr;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    pub target: TargetConfig,
    #[serde(default)]
    pub initial_map: InitialMapConfig,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dims: [usize; 4],
    #[serde(default = "unit_lengths")]
    pub lengths: [f64; 4],
}

fn unit_lengths() -> [f64; 4] {
    [1.0; 4]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    Flat,
    Conformal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    #[serde(default)]
    pub kind: MetricKind,
    #[serde(default)]
    pub phi: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Torus,
    Ball,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub kind: TargetKind,
    pub dim: usize,
    #[serde(rename = "K", default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub periods: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    #[default]
    Constant,
    Affine,
    AffinePlusModes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialMapConfig {
    #[serde(default)]
    pub kind: MapKind,
    #[serde(default)]
    pub linear_part: Option<Vec<[i64; 4]>>,
    /// Constant maps only; defaults to the chart origin.
    #[serde(default)]
    pub point: Option<Vec<f64>>,
    #[serde(default)]
    pub modes: Vec<ModeConfig>,
}

/// `amplitude·sin(2π k·x/L)` added to one target component; `k` is either
/// the unit vector along `axis` or an explicit integer `wavevector`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    #[serde(default)]
    pub axis: Option<usize>,
    #[serde(default)]
    pub wavevector: Option<[i64; 4]>,
    pub amplitude: f64,
    #[serde(default)]
    pub component: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[default]
    Explicit,
    Imex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    #[serde(default)]
    pub policy: PolicyKind,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "default_monitor_every")]
    pub monitor_every: usize,
}

fn default_cfl() -> f64 {
    0.4
}
fn default_integrator() -> Integrator {
    Integrator::Rk4
}
fn default_t_max() -> f64 {
    1.0
}
fn default_grad_tol() -> f64 {
    1e-6
}
fn default_monitor_every() -> usize {
    10
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Explicit,
            cfl: default_cfl(),
            integrator: default_integrator(),
            dt: None,
            t_max: default_t_max(),
            grad_tol: default_grad_tol(),
            max_steps: None,
            snapshot_every: 0,
            monitor_every: default_monitor_every(),
        }
    }
}

fn invalid(field: impl Into<String>, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {message}", field.into()))
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig, CliError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_json(&text)
}

/// Everything a subcommand needs, built from a validated config.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub grid: Grid4,
    pub background: Background,
    pub target: SpaceForm,
    pub initial_map: MapField,
    pub flow: FlowConfig,
    pub seed: u64,
    pub phi: Option<Expr>,
}

impl RunConfig {
    /// Parses and validates; errors name the offending key.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                CliError::Config(e.inner().to_string())
            } else {
                CliError::Config(format!("{path}: {}", e.inner()))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.grid()?;
        self.phi()?;
        let target = self.target()?;
        self.flow_config()?;
        self.check_map(&target)
    }

    pub fn grid(&self) -> Result<Grid4, CliError> {
        for (i, &n) in self.grid.dims.iter().enumerate() {
            if n < 8 || n % 2 != 0 {
                return Err(invalid(format!("grid.dims[{i}]"), format!("{n} must be even and at least 8")));
            }
        }
        for (i, &l) in self.grid.lengths.iter().enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid(format!("grid.lengths[{i}]"), format!("{l} must be positive")));
            }
        }
        Grid4::new(self.grid.dims, self.grid.lengths).map_err(|e| invalid("grid", e))
    }

    fn phi(&self) -> Result<Option<Expr>, CliError> {
        match (self.metric.kind, &self.metric.phi) {
            (MetricKind::Flat, None) => Ok(None),
            (MetricKind::Flat, Some(_)) => Err(invalid("metric.phi", "only allowed with kind \"conformal\"")),
            (MetricKind::Conformal, None) => Err(invalid("metric.phi", "required for kind \"conformal\"")),
            (MetricKind::Conformal, Some(src)) => Expr::parse(src).map(Some).map_err(|e| invalid("metric.phi", e)),
        }
    }

    pub fn target(&self) -> Result<SpaceForm, CliError> {
        let t = &self.target;
        if t.dim == 0 || t.dim > cflow_core::target::MAX_TARGET_DIM {
            return Err(invalid("target.dim", format!("{} not in 1..={}", t.dim, cflow_core::target::MAX_TARGET_DIM)));
        }
        match t.kind {
            TargetKind::Torus => {
                if let Some(k) = t.k {
                    if k != 0.0 {
                        return Err(invalid("target.K", format!("{k}: a flat torus has K = 0")));
                    }
                }
                let periods = t.periods.clone().unwrap_or_else(|| vec![1.0; t.dim]);
                if periods.len() != t.dim {
                    return Err(invalid("target.periods", format!("{} entries for dim {}", periods.len(), t.dim)));
                }
                if let Some((i, p)) = periods.iter().enumerate().find(|(_, p)| !(**p > 0.0 && p.is_finite())) {
                    return Err(invalid(format!("target.periods[{i}]"), format!("{p} must be positive")));
                }
                SpaceForm::torus(periods).map_err(|e| invalid("target", e))
            }
            TargetKind::Ball => {
                if t.periods.is_some() {
                    return Err(invalid("target.periods", "only allowed for kind \"torus\""));
                }
                let k = t.k.unwrap_or(-1.0);
                if !(k < 0.0 && k.is_finite()) {
                    return Err(invalid("target.K", format!("{k}: the ball chart needs K < 0")));
                }
                SpaceForm::ball(t.dim, k).map_err(|e| invalid("target", e))
            }
        }
    }

    pub fn flow_config(&self) -> Result<FlowConfig, CliError> {
        let f = &self.flow;
        let policy = match f.policy {
            PolicyKind::Explicit => {
                if !(f.cfl > 0.0 && f.cfl <= 1.0) {
                    return Err(invalid("flow.cfl", format!("{} not in (0, 1]", f.cfl)));
                }
                if f.dt.is_some() {
                    return Err(invalid("flow.dt", "only allowed with policy \"imex\""));
                }
                StepPolicy::Explicit { cfl: f.cfl, integrator: f.integrator }
            }
            PolicyKind::Imex => {
                let dt = f.dt.ok_or_else(|| invalid("flow.dt", "required for policy \"imex\""))?;
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(invalid("flow.dt", format!("{dt} must be positive")));
                }
                if self.metric.kind != MetricKind::Flat {
                    return Err(invalid("flow.policy", "imex needs a flat metric"));
                }
                StepPolicy::Imex { dt }
            }
        };
        if !(f.t_max > 0.0 && f.t_max.is_finite()) {
            return Err(invalid("flow.t_max", format!("{} must be positive", f.t_max)));
        }
        if !(f.grad_tol > 0.0 && f.grad_tol.is_finite()) {
            return Err(invalid("flow.grad_tol", format!("{} must be positive", f.grad_tol)));
        }
        if f.monitor_every == 0 {
            return Err(invalid("flow.monitor_every", "must be at least 1"));
        }
        Ok(FlowConfig {
            policy,
            t_max: f.t_max,
            grad_tol: f.grad_tol,
            max_steps: f.max_steps,
            snapshot_every: f.snapshot_every,
            monitor_every: f.monitor_every,
        })
    }

    fn check_map(&self, target: &SpaceForm) -> Result<(), CliError> {
        let m = &self.initial_map;
        let n = target.dim();
        match m.kind {
            MapKind::Constant => {
                if m.linear_part.is_some() {
                    return Err(invalid("initial_map.linear_part", "not allowed for a constant map"));
                }
                if !m.modes.is_empty() {
                    return Err(invalid("initial_map.modes", "not allowed for a constant map"));
                }
                if let Some(p) = &m.point {
                    if p.len() != n {
                        return Err(invalid("initial_map.point", format!("{} entries for target dim {n}", p.len())));
                    }
                    target.wrap(p).map_err(|e| invalid("initial_map.point", e))?;
                }
            }
            MapKind::Affine | MapKind::AffinePlusModes => {
                if m.point.is_some() {
                    return Err(invalid("initial_map.point", "only allowed for a constant map"));
                }
                if let Some(a) = &m.linear_part {
                    if a.len() != n {
                        return Err(invalid("initial_map.linear_part", format!("{} rows for target dim {n}", a.len())));
                    }
                    if !target.is_flat() && a.iter().flatten().any(|&v| v != 0) {
                        return Err(invalid("initial_map.linear_part", "must be zero for a ball target"));
                    }
                }
                if m.kind == MapKind::Affine && !m.modes.is_empty() {
                    return Err(invalid("initial_map.modes", "use kind \"affine_plus_modes\""));
                }
                for (i, mode) in m.modes.iter().enumerate() {
                    let at = |k: &str| format!("initial_map.modes[{i}].{k}");
                    match (mode.axis, mode.wavevector) {
                        (Some(_), Some(_)) => return Err(invalid(at("wavevector"), "give either axis or wavevector")),
                        (None, None) => return Err(invalid(at("axis"), "axis or wavevector is required")),
                        (Some(a), None) if a > 3 => return Err(invalid(at("axis"), format!("{a} not in 0..4"))),
                        (None, Some(k)) if k.iter().all(|&v| v == 0) => {
                            return Err(invalid(at("wavevector"), "must be nonzero"))
                        }
                        _ => {}
                    }
                    if !mode.amplitude.is_finite() {
                        return Err(invalid(at("amplitude"), "must be finite"));
                    }
                    if mode.component >= n {
                        return Err(invalid(at("component"), format!("{} not below target dim {n}", mode.component)));
                    }
                }
                if !target.is_flat() {
                    let total: f64 = m.modes.iter().map(|md| md.amplitude.abs()).sum();
                    if total >= 1.0 - cflow_core::target::CHART_GUARD {
                        return Err(invalid("initial_map.modes", "amplitudes may leave the ball chart"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn output_dir(&self, cli_override: Option<&Path>) -> PathBuf {
        cli_override
            .map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("cflow_out"))
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        self.validate()?;
        let grid = self.grid()?;
        let phi = self.phi()?;
        let metric = match &phi {
            None => MetricField::flat(grid),
            Some(expr) => {
                let field = Field::scalar_from_fn(grid, |x| expr.eval(x)).map_err(|e| invalid("metric.phi", e))?;
                MetricField::conformally_flat(&field).map_err(|e| invalid("metric.phi", e))?
            }
        };
        let background = Background::new(metric).map_err(|e| invalid("metric", e))?;
        let target = self.target()?;
        let initial_map = self.initial_map(grid, &target)?;
        Ok(Scenario { grid, background, target, initial_map, flow: self.flow_config()?, seed: self.seed, phi })
    }

    fn initial_map(&self, grid: Grid4, target: &SpaceForm) -> Result<MapField, CliError> {
        let m = &self.initial_map;
        let n = target.dim();
        let map_err = |e: cflow_core::Error| invalid("initial_map", e);
        match m.kind {
            MapKind::Constant => {
                let point = m.point.clone().unwrap_or_else(|| vec![0.0; n]);
                MapField::constant(grid, target.clone(), &point).map_err(map_err)
            }
            MapKind::Affine | MapKind::AffinePlusModes => {
                let a = m.linear_part.clone().unwrap_or_else(|| vec![[0; 4]; n]);
                let lengths = grid.lengths();
                let modes: Vec<(usize, [f64; 4], f64)> = m
                    .modes
                    .iter()
                    .map(|md| {
                        let k = md.wavevector.unwrap_or_else(|| {
                            let mut k = [0; 4];
                            k[md.axis.expect("validated")] = 1;
                            k
                        });
                        (md.component, std::array::from_fn(|i| 2.0 * PI * k[i] as f64 / lengths[i]), md.amplitude)
                    })
                    .collect();
                let disp = Field::from_fn(grid, Rank::Target(n), |x, out| {
                    out.fill(0.0);
                    for (c, k, amp) in &modes {
                        out[*c] += amp * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + k[3] * x[3]).sin();
                    }
                })
                .map_err(map_err)?;
                MapField::new(target.clone(), a, disp).map_err(map_err)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"grid": {"dims": [8, 8, 8, 8]}, "target": {"kind": "torus", "dim": 2}}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.flow.cfl, 0.4);
        assert_eq!(cfg.flow.grad_tol, 1e-6);
        assert_eq!(cfg.grid.lengths, [1.0; 4]);
        assert_eq!(cfg.metric.kind, MetricKind::Flat);
        let sc = cfg.scenario().unwrap();
        assert_eq!(sc.target.periods(), Some(&[1.0, 1.0][..]));
    }

    #[test]
    fn conformal_factor_is_parsed() {
        let cfg = RunConfig::from_json(
            r#"{"grid": {"dims": [8, 8, 8, 8]}, "target": {"kind": "torus", "dim": 1},
                "metric": {"kind": "conformal", "phi": "0.15*sin(2*pi*x0)*sin(2*pi*x1)"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.scenario().unwrap().phi.unwrap().depth(), 4);
    }

    #[test]
    fn uneven_but_even_dims_accepted_for_imex() {
        let cfg = RunConfig::from_json(
            r#"{"grid": {"dims": [12, 16, 16, 16]}, "target": {"kind": "torus", "dim": 1},
                "flow": {"policy": "imex", "dt": 1e-4}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.flow_config().unwrap().policy, StepPolicy::Imex { .. }));
    }
}
