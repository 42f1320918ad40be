//! Closed-form slit harmonics `Re(x_1 + i|x_n|)^kappa` and the boundary data
//! of the shipped scenarios.
//!
//! In three dimensions the closed forms are evaluated on `(x_1, x_3)` and are
//! constant along `x_2`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::FieldView;
use crate::geometry::{norm, Point};

/// Tolerance for the `|x| = 1` precondition on boundary evaluations.
const SPHERE_SLACK: f64 = 1e-9;

/// Tolerance for admissibility of sampled data on the thin equator.
const ADMISSIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("kappa = {0} is not a positive half-odd integer")]
    InvalidKappa(f64),
    #[error("gradient is unbounded on the slit at ({x1}, {xn})")]
    OnSlit { x1: f64, xn: f64 },
    #[error("point {0:?} is not on the unit sphere")]
    NotOnSphere(Point),
    #[error("boundary datum is inadmissible: {0}")]
    Inadmissible(String),
    #[error("boundary table is malformed: {0}")]
    MalformedTable(String),
}

fn check_kappa(kappa: f64) -> Result<(), AnalyticError> {
    let m = kappa + 0.5;
    if kappa > 0.0 && kappa.is_finite() && (m - m.round()).abs() < 1e-12 {
        Ok(())
    } else {
        Err(AnalyticError::InvalidKappa(kappa))
    }
}

/// `r^kappa cos(kappa theta)` with `theta = atan2(|x_n|, x_1)` in `[0, pi]`.
///
/// Exactly zero on the slit `{x_1 <= 0, x_n = 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlitHarmonic {
    kappa: f64,
}

impl SlitHarmonic {
    pub fn new(kappa: f64) -> Result<Self, AnalyticError> {
        check_kappa(kappa)?;
        Ok(SlitHarmonic { kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn value(&self, x1: f64, xn: f64) -> f64 {
        if xn == 0.0 && x1 <= 0.0 {
            return 0.0;
        }
        let y = xn.abs();
        let r = x1.hypot(y);
        let theta = y.atan2(x1);
        r.powf(self.kappa) * (self.kappa * theta).cos()
    }

    /// `(d/dx_1, d/dx_n)`; `|grad|^2 = kappa^2 r^(2 kappa - 2)`.
    pub fn gradient(&self, x1: f64, xn: f64) -> Result<[f64; 2], AnalyticError> {
        if xn == 0.0 && x1 <= 0.0 {
            return Err(AnalyticError::OnSlit { x1, xn });
        }
        let k = self.kappa;
        let y = xn.abs();
        let r = x1.hypot(y);
        let theta = y.atan2(x1);
        let amp = k * r.powf(k - 1.0);
        let d1 = amp * ((k - 1.0) * theta).cos();
        let dy = -amp * ((k - 1.0) * theta).sin();
        Ok([d1, if xn < 0.0 { -dy } else { dy }])
    }

    pub fn value_at(&self, p: &Point, dim: usize) -> f64 {
        self.value(p[0], p[dim - 1])
    }
}

/// `Re(x_1 + i|x_n|)^kappa` evaluated on the `(x_1, x_n)` slice.
pub fn slit_value(kappa: f64, x1: f64, xn: f64) -> Result<f64, AnalyticError> {
    Ok(SlitHarmonic::new(kappa)?.value(x1, xn))
}

pub fn slit_gradient(kappa: f64, x1: f64, xn: f64) -> Result<[f64; 2], AnalyticError> {
    SlitHarmonic::new(kappa)?.gradient(x1, xn)
}

/// Sampled boundary values on the upper half sphere.
///
/// Two dimensions: `values[k]` at angle `pi k / (len - 1)` measured from the
/// positive `x_1` axis, `k = 0..len`. Three dimensions: a polar angle from the
/// `x_n` axis in `[0, pi/2]` (`polar` rows, equator last) times `azimuth`
/// uniform longitudes with `x_1 = cos(phi)` on the equator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundaryTable {
    Arc { values: Vec<f64> },
    Hemisphere {
        polar: usize,
        azimuth: usize,
        values: Vec<f64>,
    },
}

impl BoundaryTable {
    pub fn arc(values: Vec<f64>) -> Result<Self, AnalyticError> {
        if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
            return Err(AnalyticError::MalformedTable(
                "arc needs at least two finite samples".into(),
            ));
        }
        let table = BoundaryTable::Arc { values };
        table.check_admissible()?;
        Ok(table)
    }

    pub fn hemisphere(polar: usize, azimuth: usize, values: Vec<f64>) -> Result<Self, AnalyticError> {
        if polar < 2 || azimuth < 3 || values.len() != polar * azimuth {
            return Err(AnalyticError::MalformedTable(format!(
                "hemisphere {polar}x{azimuth} with {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AnalyticError::MalformedTable("non-finite sample".into()));
        }
        let table = BoundaryTable::Hemisphere {
            polar,
            azimuth,
            values,
        };
        table.check_admissible()?;
        Ok(table)
    }

    /// Tabulates `f` on the sample directions of a table of the given shape.
    pub fn sample<F: Fn(&Point) -> f64>(dim: usize, samples: usize, f: F) -> Result<Self, AnalyticError> {
        if dim == 2 {
            let values = (0..samples)
                .map(|k| {
                    let t = PI * k as f64 / (samples - 1) as f64;
                    f(&[t.cos(), t.sin(), 0.0])
                })
                .collect();
            Self::arc(values)
        } else {
            let polar = samples.max(2);
            let azimuth = 2 * samples;
            let mut values = Vec::with_capacity(polar * azimuth);
            for i in 0..polar {
                let t = 0.5 * PI * i as f64 / (polar - 1) as f64;
                for j in 0..azimuth {
                    let phi = 2.0 * PI * j as f64 / azimuth as f64;
                    values.push(f(&[t.sin() * phi.cos(), t.sin() * phi.sin(), t.cos()]));
                }
            }
            Self::hemisphere(polar, azimuth, values)
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BoundaryTable::Arc { .. } => 2,
            BoundaryTable::Hemisphere { .. } => 3,
        }
    }

    /// Linear (2D) or bilinear (3D) interpolation at a unit vector.
    pub fn evaluate(&self, p: &Point) -> f64 {
        match self {
            BoundaryTable::Arc { values } => {
                let t = p[1].abs().atan2(p[0]);
                let s = t / PI * (values.len() - 1) as f64;
                let k = (s.floor() as usize).min(values.len() - 2);
                let f = s - k as f64;
                values[k] * (1.0 - f) + values[k + 1] * f
            }
            BoundaryTable::Hemisphere {
                polar,
                azimuth,
                values,
            } => {
                let rho = p[0].hypot(p[1]);
                let t = rho.atan2(p[2].abs());
                let s = t / (0.5 * PI) * (*polar - 1) as f64;
                let i = (s.floor() as usize).min(*polar - 2);
                let fi = s - i as f64;
                let mut phi = p[1].atan2(p[0]);
                if phi < 0.0 {
                    phi += 2.0 * PI;
                }
                let u = phi / (2.0 * PI) * *azimuth as f64;
                let j = (u.floor() as usize) % *azimuth;
                let fj = u - u.floor();
                let j1 = (j + 1) % *azimuth;
                let at = |a: usize, b: usize| values[a * *azimuth + b];
                (1.0 - fi) * ((1.0 - fj) * at(i, j) + fj * at(i, j1))
                    + fi * ((1.0 - fj) * at(i + 1, j) + fj * at(i + 1, j1))
            }
        }
    }

    /// Samples on the thin equator: nonnegative where `x_1 > 0`, zero where
    /// `x_1 <= 0`.
    pub fn check_admissible(&self) -> Result<(), AnalyticError> {
        for (p, v) in self.equator_samples() {
            if p[0] > 0.0 && v < -ADMISSIBILITY_SLACK {
                return Err(AnalyticError::Inadmissible(format!(
                    "negative value {v} at thin point {p:?}"
                )));
            }
            if p[0] <= ADMISSIBILITY_SLACK && v.abs() > ADMISSIBILITY_SLACK {
                return Err(AnalyticError::Inadmissible(format!(
                    "nonzero value {v} at clamped point {p:?}"
                )));
            }
        }
        Ok(())
    }

    fn equator_samples(&self) -> Vec<(Point, f64)> {
        match self {
            BoundaryTable::Arc { values } => vec![
                ([1.0, 0.0, 0.0], values[0]),
                ([-1.0, 0.0, 0.0], values[values.len() - 1]),
            ],
            BoundaryTable::Hemisphere {
                polar,
                azimuth,
                values,
            } => (0..*azimuth)
                .map(|j| {
                    let phi = 2.0 * PI * j as f64 / *azimuth as f64;
                    let mut x1 = phi.cos();
                    if x1.abs() < 1e-14 {
                        x1 = 0.0;
                    }
                    ([x1, phi.sin(), 0.0], values[(*polar - 1) * *azimuth + j])
                })
                .collect(),
        }
    }
}

/// Boundary datum descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Datum {
    SlitTrace { kappa: f64 },
    Constant { value: f64 },
    ShiftedSlit { kappa: f64, offset: f64 },
    Table(BoundaryTable),
}

/// A named boundary value problem: datum `amplitude * g` on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub datum: Datum,
    pub dimension: usize,
    /// Positive multiple applied to the datum.
    pub amplitude: f64,
}

impl Scenario {
    pub fn new(name: impl Into<String>, datum: Datum, dimension: usize) -> Result<Self, AnalyticError> {
        match &datum {
            Datum::SlitTrace { kappa } | Datum::ShiftedSlit { kappa, .. } => check_kappa(*kappa)?,
            Datum::Constant { value } if !value.is_finite() => {
                return Err(AnalyticError::Inadmissible("non-finite constant".into()))
            }
            Datum::Table(t) if t.dim() != dimension => {
                return Err(AnalyticError::MalformedTable(format!(
                    "table is {}-dimensional, scenario is {dimension}-dimensional",
                    t.dim()
                )))
            }
            _ => {}
        }
        Ok(Scenario {
            name: name.into(),
            datum,
            dimension,
            amplitude: 1.0,
        })
    }

    pub fn slit_trace(kappa: f64, dimension: usize) -> Result<Self, AnalyticError> {
        Self::new(format!("slit_trace({kappa})"), Datum::SlitTrace { kappa }, dimension)
    }

    pub fn constant(value: f64, dimension: usize) -> Result<Self, AnalyticError> {
        Self::new(format!("constant({value})"), Datum::Constant { value }, dimension)
    }

    pub fn shifted_slit(kappa: f64, offset: f64, dimension: usize) -> Result<Self, AnalyticError> {
        Self::new(
            format!("shifted_slit({kappa}, {offset})"),
            Datum::ShiftedSlit { kappa, offset },
            dimension,
        )
    }

    pub fn table(table: BoundaryTable) -> Result<Self, AnalyticError> {
        let dim = table.dim();
        Self::new("table", Datum::Table(table), dim)
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Datum at a point of the unit sphere, without the `|x| = 1` check.
    pub fn datum_at(&self, p: &Point) -> f64 {
        let dim = self.dimension;
        let g = match &self.datum {
            Datum::SlitTrace { kappa } => SlitHarmonic { kappa: *kappa }.value(p[0], p[dim - 1]),
            Datum::Constant { value } => *value,
            Datum::ShiftedSlit { kappa, offset } => {
                SlitHarmonic { kappa: *kappa }.value(p[0] - offset, p[dim - 1])
            }
            Datum::Table(t) => t.evaluate(p),
        };
        self.amplitude * g
    }

    /// Nonnegativity of the datum where the thin equator has `x_1 > 0`; tables
    /// must also vanish where `x_1 <= 0`.
    pub fn check_admissible(&self) -> Result<(), AnalyticError> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(AnalyticError::Inadmissible(format!(
                "amplitude {} must be a nonnegative number",
                self.amplitude
            )));
        }
        if let Datum::Table(t) = &self.datum {
            t.check_admissible()?;
        }
        let count = if self.dimension == 2 { 2 } else { 64 };
        for j in 0..count {
            let phi = 2.0 * PI * j as f64 / count as f64;
            let p = if self.dimension == 2 {
                [phi.cos(), 0.0, 0.0]
            } else {
                [phi.cos(), phi.sin(), 0.0]
            };
            if p[0] > 1e-14 {
                let v = self.datum_at(&p);
                if v < -ADMISSIBILITY_SLACK {
                    return Err(AnalyticError::Inadmissible(format!(
                        "datum {v} < 0 at thin boundary point {p:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Scenario datum at a point of the unit sphere.
pub fn scenario_boundary(scenario: &Scenario, sphere_point: &Point) -> Result<f64, AnalyticError> {
    if (norm(sphere_point) - 1.0).abs() > SPHERE_SLACK {
        return Err(AnalyticError::NotOnSphere(*sphere_point));
    }
    if let Datum::Table(t) = &scenario.datum {
        t.check_admissible()?;
    }
    Ok(scenario.datum_at(sphere_point))
}

/// A slit harmonic (optionally shifted along `x_1`) as an exact field, with
/// the analytic gradient. `spacing` only sets quadrature density.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticField {
    pub harmonic: SlitHarmonic,
    pub dim: usize,
    pub offset: f64,
    pub spacing: f64,
}

impl AnalyticField {
    pub fn new(kappa: f64, dim: usize, spacing: f64) -> Result<Self, AnalyticError> {
        Ok(AnalyticField {
            harmonic: SlitHarmonic::new(kappa)?,
            dim,
            offset: 0.0,
            spacing,
        })
    }
}

impl FieldView for AnalyticField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn spacing(&self) -> f64 {
        self.spacing
    }

    fn value_at(&self, p: &Point) -> f64 {
        self.harmonic.value(p[0] - self.offset, p[self.dim - 1])
    }

    fn gradient_at(&self, p: &Point) -> Point {
        let n = self.dim - 1;
        match self.harmonic.gradient(p[0] - self.offset, p[n]) {
            Ok(g) => {
                let mut out = [0.0; 3];
                out[0] = g[0];
                out[n] = g[1];
                out
            }
            Err(_) => [0.0; 3],
        }
    }
}
