//! Constant-curvature targets in an explicit chart.
//!
//! Both charts are conformally flat: `h = c(y)·Id` with `c ≡ 1` on the flat
//! torus and `c = 4/((−K)(1−|y|²)²)` on the Poincaré ball.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points with `|y| ≥ 1 − CHART_GUARD` have left the ball chart.
pub const CHART_GUARD: f64 = 1e-6;

/// Largest supported target dimension.
pub const MAX_TARGET_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chart {
    FlatTorus { periods: Vec<f64> },
    HyperbolicBall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceForm {
    n: usize,
    k: f64,
    chart: Chart,
}

impl SpaceForm {
    pub fn new(n: usize, k: f64, chart: Chart) -> Result<Self> {
        if n == 0 || n > MAX_TARGET_DIM {
            return Err(Error::InvalidTarget(format!("dim = {n}: need 1..={MAX_TARGET_DIM}")));
        }
        if !k.is_finite() {
            return Err(Error::InvalidTarget(format!("K = {k} is not finite")));
        }
        match &chart {
            Chart::FlatTorus { periods } => {
                if k != 0.0 {
                    return Err(Error::InvalidTarget(format!("flat torus needs K = 0, got {k}")));
                }
                if periods.len() != n {
                    return Err(Error::InvalidTarget(format!(
                        "{} periods given for dim {n}",
                        periods.len()
                    )));
                }
                if let Some(p) = periods.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
                    return Err(Error::InvalidTarget(format!("period {p} must be positive")));
                }
            }
            Chart::HyperbolicBall => {
                if !(k < 0.0) {
                    return Err(Error::InvalidTarget(format!("hyperbolic ball needs K < 0, got {k}")));
                }
            }
        }
        Ok(Self { n, k, chart })
    }

    pub fn torus(periods: Vec<f64>) -> Result<Self> {
        Self::new(periods.len(), 0.0, Chart::FlatTorus { periods })
    }

    pub fn ball(n: usize, k: f64) -> Result<Self> {
        Self::new(n, k, Chart::HyperbolicBall)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn curvature(&self) -> f64 {
        self.k
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.chart, Chart::FlatTorus { .. })
    }

    pub fn periods(&self) -> Option<&[f64]> {
        match &self.chart {
            Chart::FlatTorus { periods } => Some(periods),
            Chart::HyperbolicBall => None,
        }
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, found: v.len() });
        }
        Ok(())
    }

    /// Errors unless `y` lies in the open chart domain.
    pub fn check_point(&self, y: &[f64]) -> Result<()> {
        self.check_dim(y)?;
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite coordinate {v}")));
        }
        if !self.is_flat() {
            let r = norm2(y).sqrt();
            if r >= 1.0 {
                return Err(Error::ChartViolation { radius: r, guard: 0.0 });
            }
        }
        Ok(())
    }

    /// The conformal factor `c(y)` of `h = c·Id`.
    pub(crate) fn factor(&self, y: &[f64]) -> f64 {
        match self.chart {
            Chart::FlatTorus { .. } => 1.0,
            Chart::HyperbolicBall => {
                let d = 1.0 - norm2(y);
                4.0 / ((-self.k) * d * d)
            }
        }
    }

    /// `ℓ = ∇ ln √c`, so that `Γ^a(X,Y) = X^a(ℓ·Y) + Y^a(ℓ·X) − (X·Y)ℓ^a`.
    pub(crate) fn log_grad(&self, y: &[f64], out: &mut [f64]) {
        match self.chart {
            Chart::FlatTorus { .. } => out.fill(0.0),
            Chart::HyperbolicBall => {
                let s = 2.0 / (1.0 - norm2(y));
                for (o, v) in out.iter_mut().zip(y) {
                    *o = s * v;
                }
            }
        }
    }

    /// `∂_d ℓ_c`, row-major `n×n`.
    pub(crate) fn log_hessian(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        match self.chart {
            Chart::FlatTorus { .. } => out[..n * n].fill(0.0),
            Chart::HyperbolicBall => {
                let d = 1.0 - norm2(y);
                for a in 0..n {
                    for b in 0..n {
                        out[a * n + b] = 4.0 * y[a] * y[b] / (d * d) + if a == b { 2.0 / d } else { 0.0 };
                    }
                }
            }
        }
    }

    /// `h_ab(y)` as an `n×n` matrix.
    pub fn metric_h(&self, y: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_point(y)?;
        let c = self.factor(y);
        Ok((0..self.n).map(|a| (0..self.n).map(|b| if a == b { c } else { 0.0 }).collect()).collect())
    }

    /// `⟨X, Y⟩_h` at `y`.
    pub fn inner(&self, y: &[f64], x: &[f64], z: &[f64]) -> Result<f64> {
        self.check_point(y)?;
        self.check_dim(x)?;
        self.check_dim(z)?;
        Ok(self.factor(y) * dot(x, z))
    }

    /// `Γ^a_{bc}(y)`, flattened as `[(a·n + b)·n + c]`.
    pub fn christoffel_n(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_point(y)?;
        let n = self.n;
        let mut l = vec![0.0; n];
        self.log_grad(y, &mut l);
        let mut out = vec![0.0; n * n * n];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut v = 0.0;
                    if a == b {
                        v += l[c];
                    }
                    if a == c {
                        v += l[b];
                    }
                    if b == c {
                        v -= l[a];
                    }
                    out[(a * n + b) * n + c] = v;
                }
            }
        }
        Ok(out)
    }

    /// `R^N(X,Y)Z = K(⟨Y,Z⟩_h X − ⟨X,Z⟩_h Y)`.
    pub fn curv_op(&self, y: &[f64], x: &[f64], yv: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.check_point(y)?;
        for v in [x, yv, z] {
            self.check_dim(v)?;
        }
        let c = self.factor(y);
        let yz = c * dot(yv, z);
        let xz = c * dot(x, z);
        Ok(x.iter().zip(yv).map(|(a, b)| self.k * (yz * a - xz * b)).collect())
    }

    /// Reduces torus coordinates into `[0, period)`; checks the ball guard.
    pub fn wrap(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = y.to_vec();
        self.wrap_in_place(&mut out)?;
        Ok(out)
    }

    pub(crate) fn wrap_in_place(&self, y: &mut [f64]) -> Result<()> {
        self.check_dim(y)?;
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite coordinate {v}")));
        }
        match &self.chart {
            Chart::FlatTorus { periods } => {
                for (v, p) in y.iter_mut().zip(periods) {
                    if *v >= 0.0 && *v < *p {
                        continue;
                    }
                    let r = v.rem_euclid(*p);
                    // rem_euclid can round up to exactly p for tiny negative inputs
                    *v = if r >= *p { 0.0 } else { r };
                }
            }
            Chart::HyperbolicBall => {
                let r = norm2(y).sqrt();
                if r >= 1.0 - CHART_GUARD {
                    return Err(Error::ChartViolation { radius: r, guard: CHART_GUARD });
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
