//! Rescalings `u(r x + x_0) / (r^{1-n} H(r))^{1/2}` around thin-plane points
//! and estimates of the blowup homogeneity `kappa = N(0+)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::FieldView;
use crate::fit::fit_line;
use crate::frequency::{frequency_profile, FrequencyError, DEGENERATE_H};
use crate::geometry::{norm, GeometryError, Point, Quadrature, SphereQuadrature};

/// Disagreement between the two estimators above which an estimate is
/// flagged as low confidence.
pub const METHOD_DISAGREEMENT: f64 = 0.15;

/// Number of radii sampled across an estimation window.
pub const WINDOW_SAMPLES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlowupError {
    #[error(transparent)]
    Frequency(#[from] FrequencyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("field vanishes on the sphere of radius {0} (H = {1:e})")]
    Degenerate(f64, f64),
    #[error("radius window [{lo}, {hi}] is outside the valid range [{min}, {max}]")]
    InvalidWindow { lo: f64, hi: f64, min: f64, max: f64 },
    #[error("only {0} usable radii in the window, at least 4 are required")]
    TooFewRadii(usize),
    #[error("kappa must be positive, got {0}")]
    NonPositiveKappa(f64),
}

/// `x -> u(r x + x_0) / norm` on the unit ball, evaluated lazily.
#[derive(Debug, Clone, Copy)]
pub struct BlowupField<'a, F: FieldView + ?Sized> {
    source: &'a F,
    pub center: Point,
    pub scale: f64,
    /// `(r^{1-n} int_{dB_r(x_0)} u^2)^{1/2}`.
    pub normalization: f64,
}

impl<F: FieldView + ?Sized> BlowupField<'_, F> {
    fn map(&self, p: &Point) -> Point {
        [
            self.center[0] + self.scale * p[0],
            self.center[1] + self.scale * p[1],
            self.center[2] + self.scale * p[2],
        ]
    }

    /// `int_{dB_1} (rescaled)^2`.
    pub fn unit_sphere_norm(&self) -> f64 {
        let q = Quadrature::new(self.dim(), self.spacing());
        q.sphere([0.0; 3], 1.0).integrate(|p| {
            let v = self.value_at(p);
            v * v
        })
    }
}

impl<F: FieldView + ?Sized> FieldView for BlowupField<'_, F> {
    fn dim(&self) -> usize {
        self.source.dim()
    }

    fn spacing(&self) -> f64 {
        self.source.spacing() / self.scale
    }

    fn value_at(&self, p: &Point) -> f64 {
        self.source.value_at(&self.map(p)) / self.normalization
    }

    fn gradient_at(&self, p: &Point) -> Point {
        let g = self.source.gradient_at(&self.map(p));
        let f = self.scale / self.normalization;
        [g[0] * f, g[1] * f, g[2] * f]
    }
}

/// Rescales around `x0` at scale `r`.
pub fn rescale<'a, F: FieldView + ?Sized>(
    field: &'a F,
    x0: &Point,
    r: f64,
) -> Result<BlowupField<'a, F>, BlowupError> {
    let dim = field.dim();
    if x0[dim - 1].abs() > 1e-12 {
        return Err(GeometryError::OffThinPlane(*x0).into());
    }
    let q = Quadrature::new(dim, field.spacing());
    let h = q.sphere_integral(
        |p| {
            let v = field.value_at(p);
            v * v
        },
        x0,
        r,
        None,
    )?;
    if h < DEGENERATE_H {
        return Err(BlowupError::Degenerate(r, h));
    }
    Ok(BlowupField {
        source: field,
        center: *x0,
        scale: r,
        normalization: (r.powi(1 - dim as i32) * h).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimationMethod {
    /// Affine extrapolation of `N(r)` to `r = 0`.
    FrequencyIntercept,
    /// Slope of `log H` against `log r`.
    LogSlope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityEstimate {
    pub kappa_hat: f64,
    pub method: EstimationMethod,
    pub fit_residual: f64,
    pub window: (f64, f64),
    /// Secondary estimate `(s - (n - 1)) / 2` from the log-slope `s` of `H`.
    pub log_slope_kappa: f64,
    pub log_slope_residual: f64,
    pub low_confidence: bool,
    /// Frequency at the largest radius of the window.
    pub n_at_max: f64,
}

/// Default window `[6h, 0.3]`, shrunk to keep balls inside the unit ball.
pub fn default_window(h: f64, x0: &Point) -> (f64, f64) {
    (6.0 * h, 0.3f64.min(1.0 - norm(x0) - 2.0 * h))
}

/// `kappa_hat` as the intercept of an affine fit of `N(r)` over the window,
/// cross-checked by the log-slope of `H`.
pub fn estimate_homogeneity<F: FieldView + ?Sized>(
    field: &F,
    x0: &Point,
    window: (f64, f64),
) -> Result<HomogeneityEstimate, BlowupError> {
    let h = field.spacing();
    let (lo, hi) = window;
    let max = 1.0 - norm(x0) - 2.0 * h;
    if !(lo >= 4.0 * h - 1e-12 && hi <= max + 1e-12 && hi > lo) {
        return Err(BlowupError::InvalidWindow {
            lo,
            hi,
            min: 4.0 * h,
            max,
        });
    }
    let radii: Vec<f64> = (0..WINDOW_SAMPLES)
        .map(|k| lo + (hi - lo) * k as f64 / (WINDOW_SAMPLES - 1) as f64)
        .collect();
    let profile = frequency_profile(field, x0, &radii)?;
    if profile.rows.len() < 4 {
        return Err(BlowupError::TooFewRadii(profile.rows.len()));
    }
    let r: Vec<f64> = profile.rows.iter().map(|row| row.r).collect();
    let n: Vec<f64> = profile.rows.iter().map(|row| row.n).collect();
    let log_r: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let log_h: Vec<f64> = profile.rows.iter().map(|row| row.h.ln()).collect();
    let primary = fit_line(&r, &n).ok_or(BlowupError::TooFewRadii(r.len()))?;
    let secondary = fit_line(&log_r, &log_h).ok_or(BlowupError::TooFewRadii(r.len()))?;
    let dim = field.dim() as f64;
    let log_slope_kappa = (secondary.slope - (dim - 1.0)) / 2.0;
    Ok(HomogeneityEstimate {
        kappa_hat: primary.intercept,
        method: EstimationMethod::FrequencyIntercept,
        fit_residual: primary.residual,
        window,
        log_slope_kappa,
        log_slope_residual: secondary.residual,
        low_confidence: (primary.intercept - log_slope_kappa).abs() > METHOD_DISAGREEMENT,
        n_at_max: *n.last().expect("at least four radii"),
    })
}

/// Fixed probe directions on the unit sphere, none on the thin plane.
fn probe_directions(dim: usize) -> Vec<Point> {
    if dim == 2 {
        (0..16)
            .map(|k| {
                let t = (k as f64 + 0.5) * PI / 8.0;
                [t.cos(), t.sin(), 0.0]
            })
            .collect()
    } else {
        SphereQuadrature::new(3, [0.0; 3], 1.0, 12).normals
    }
}

/// `max |u(rho theta) - rho^kappa u(theta)| / sup_{dB_1} |u|` over probe
/// directions `theta` and `rho` in `{0.25, 0.5}`.
pub fn homogeneity_deviation<F: FieldView + ?Sized>(blowup: &F, kappa: f64) -> Result<f64, BlowupError> {
    if kappa.is_nan() || kappa <= 0.0 {
        return Err(BlowupError::NonPositiveKappa(kappa));
    }
    let dim = blowup.dim();
    let q = Quadrature::new(dim, blowup.spacing());
    let sup = q
        .sphere([0.0; 3], 1.0)
        .points
        .iter()
        .chain(probe_directions(dim).iter())
        .map(|p| blowup.value_at(p).abs())
        .fold(0.0, f64::max);
    if sup == 0.0 {
        return Ok(0.0);
    }
    let mut worst = 0.0f64;
    for theta in probe_directions(dim) {
        let outer = blowup.value_at(&theta);
        for rho in [0.25, 0.5] {
            let inner = blowup.value_at(&[rho * theta[0], rho * theta[1], rho * theta[2]]);
            worst = worst.max((inner - rho.powf(kappa) * outer).abs());
        }
    }
    Ok(worst / sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::SlitHarmonic;
    use crate::field::ScalarField;
    use crate::frequency::frequency_profile;
    use crate::geometry::build_grid;
    use std::sync::Arc;

    fn sampled(kappa: f64, n: usize) -> ScalarField {
        let g = Arc::new(build_grid(2, 1.0 / n as f64).unwrap());
        let s = SlitHarmonic::new(kappa).unwrap();
        ScalarField::from_fn(g, |p| s.value(p[0], p[1]))
    }

    #[test]
    fn rescaled_half_harmonic_is_a_constant_multiple() {
        let u = sampled(0.5, 64);
        let b = rescale(&u, &[0.0; 3], 0.5).unwrap();
        assert!((b.unit_sphere_norm() - 1.0).abs() < 1e-3);
        let s = SlitHarmonic::new(0.5).unwrap();
        for p in [[0.3, 0.4, 0.0], [-0.5, 0.2, 0.0], [0.1, -0.7, 0.0]] {
            let exact = s.value(p[0], p[1]) / PI.sqrt();
            assert!((b.value_at(&p) - exact).abs() < 5e-3, "{p:?}");
        }
    }

    #[test]
    fn scaling_identity() {
        let u = sampled(1.5, 64);
        let x0 = [0.1, 0.0, 0.0];
        for r in [0.2, 0.4] {
            let b = rescale(&u, &x0, r).unwrap();
            for rho in [0.25, 0.5] {
                let nb = frequency_profile(&b, &[0.0; 3], &[rho]).unwrap().rows[0].n;
                let nu = frequency_profile(&u, &x0, &[rho * r]).unwrap().rows[0].n;
                assert!((nb - nu).abs() < 0.01, "{r} {rho}: {nb} {nu}");
            }
        }
    }

    #[test]
    fn zero_field_is_degenerate() {
        let g = Arc::new(build_grid(2, 1.0 / 16.0).unwrap());
        let u = ScalarField::zeros(g);
        assert!(matches!(rescale(&u, &[0.0; 3], 0.5), Err(BlowupError::Degenerate(..))));
        assert_eq!(homogeneity_deviation(&u, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn homogeneity_of_closed_forms() {
        for kappa in [0.5, 1.5] {
            let u = sampled(kappa, 128);
            let est = estimate_homogeneity(&u, &[0.0; 3], default_window(1.0 / 128.0, &[0.0; 3])).unwrap();
            assert!((est.kappa_hat - kappa).abs() < 0.05, "{est:?}");
            assert!((est.log_slope_kappa - kappa).abs() < 0.1, "{est:?}");
            assert!(!est.low_confidence);
        }
    }

    #[test]
    fn deviation_detects_the_exponent() {
        let u = sampled(1.5, 64);
        let b = rescale(&u, &[0.0; 3], 0.5).unwrap();
        assert!(homogeneity_deviation(&b, 1.5).unwrap() <= 0.02);
        assert!(homogeneity_deviation(&b, 0.5).unwrap() >= 0.2);
    }

    #[test]
    fn rejects_bad_windows() {
        let u = sampled(0.5, 32);
        assert!(matches!(
            estimate_homogeneity(&u, &[0.0; 3], (0.01, 0.3)),
            Err(BlowupError::InvalidWindow { .. })
        ));
        assert!(matches!(
            estimate_homogeneity(&u, &[0.5, 0.0, 0.0], (0.2, 0.6)),
            Err(BlowupError::InvalidWindow { .. })
        ));
    }
}
