//! Almgren frequency `N(r) = r D(r) / H(r)`, the weighted half-ball energy
//! and residuals of the identities relating bulk and boundary integrals.
//!
//! `D(r) = int_{B_r} |grad u|^2` and `H(r) = int_{dB_r} u^2` are taken over
//! the even-extended ball around a center on the thin plane.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::FieldView;
use crate::geometry::{dot, GeometryError, Point, Quadrature, SphereQuadrature};

/// Radii with `H` below this are dropped.
pub const DEGENERATE_H: f64 = 1e-14;

/// Denominator guard for relative residuals.
const GUARD: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrequencyError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("center x_1 = {0} is negative; the frequency is only monotone for x_1 >= 0")]
    NegativeCenter(f64),
    #[error("radii must be positive and strictly increasing")]
    UnorderedRadii,
    #[error("at least {needed} radii are required, got {got}")]
    TooFewRadii { needed: usize, got: usize },
    #[error("field is {value:e} at clamped point {point:?}, expected zero")]
    ClampViolation { value: f64, point: Point },
}

/// Integrals of one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub r: f64,
    /// `int_{B_r} |grad u|^2`.
    pub d: f64,
    /// `int_{dB_r} u^2`.
    pub h: f64,
    /// `r D / H`.
    pub n: f64,
    /// `(1/r) int_{B_r^+} |grad u|^2 / |x - c|^{n-2}`.
    pub phi: f64,
    /// `int_{dB_r} u u_nu`.
    pub flux: f64,
    /// Centered difference `(H(r + h) - H(r - h)) / 2h`.
    pub h_prime: f64,
    pub res_id1: f64,
    pub res_id2: f64,
    /// `r int_{dB_r} |grad u|^2`.
    pub rellich_lhs: f64,
    /// `rellich_lhs - (n - 2) D - 2 r int_{dB_r} u_nu^2`.
    pub rellich_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProfile {
    pub center: Point,
    pub rows: Vec<FrequencyRow>,
    /// Radii dropped because `H` was degenerate.
    pub dropped: Vec<f64>,
}

impl FrequencyProfile {
    pub fn radii(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.r).collect()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.n).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityVerdict {
    pub monotone: bool,
    /// `max_i (N_i - N_{i+1})`, clipped at zero.
    pub worst_violation: f64,
    /// Radii `(r_i, r_{i+1})` of the worst violation.
    pub location: Option<(f64, f64)>,
}

/// Radii from `4h` to `0.5 (1 - |c|)` in steps of `h`.
pub fn default_radii(h: f64, center: &Point) -> Vec<f64> {
    let r_max = 0.5 * (1.0 - crate::geometry::norm(center));
    radius_range(4.0 * h, r_max, h)
}

/// `lo, lo + step, ...` up to `hi` inclusive (within rounding).
pub fn radius_range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor();
    if count < 0.0 {
        return Vec::new();
    }
    (0..=count as usize).map(|k| lo + k as f64 * step).collect()
}

fn check_center(dim: usize, center: &Point) -> Result<(), FrequencyError> {
    if center[dim - 1].abs() > 1e-12 {
        return Err(GeometryError::OffThinPlane(*center).into());
    }
    if center[0] < 0.0 {
        return Err(FrequencyError::NegativeCenter(center[0]));
    }
    Ok(())
}

struct SphereMoments {
    h: f64,
    flux: f64,
    grad2: f64,
    normal2: f64,
}

fn sphere_moments<F: FieldView + ?Sized>(field: &F, q: &Quadrature, center: &Point, r: f64) -> SphereMoments {
    let s = q.sphere(*center, r);
    let mut m = SphereMoments {
        h: 0.0,
        flux: 0.0,
        grad2: 0.0,
        normal2: 0.0,
    };
    for ((p, nu), w) in s.points.iter().zip(&s.normals).zip(&s.weights) {
        let u = field.value_at(p);
        let g = field.gradient_at(p);
        let un = dot(&g, nu);
        m.h += w * u * u;
        m.flux += w * u * un;
        m.grad2 += w * dot(&g, &g);
        m.normal2 += w * un * un;
    }
    m
}

fn sphere_h<F: FieldView + ?Sized>(field: &F, q: &Quadrature, center: &Point, r: f64) -> f64 {
    let s: SphereQuadrature = q.sphere(*center, r);
    s.integrate(|p| {
        let u = field.value_at(p);
        u * u
    })
}

fn grad2<F: FieldView + ?Sized>(field: &F) -> impl Fn(&Point) -> f64 + '_ {
    move |p| {
        let g = field.gradient_at(p);
        dot(&g, &g)
    }
}

fn row<F: FieldView + ?Sized>(field: &F, center: &Point, r: f64) -> Result<FrequencyRow, FrequencyError> {
    let dim = field.dim();
    let q = Quadrature::new(dim, field.spacing());
    let step = field.spacing();
    // containment of the outer ball used by the H' difference
    q.sphere_integral(|_| 0.0, center, r + step, Some(2))?;
    let d = q.ball_integral(grad2(field), center, r, false)?;
    let weighted = if dim == 3 && r >= step {
        q.ball_integral(grad2(field), center, r, true)?
    } else {
        d
    };
    let m = sphere_moments(field, &q, center, r);
    let h_prime = if r > step {
        (sphere_h(field, &q, center, r + step) - sphere_h(field, &q, center, r - step)) / (2.0 * step)
    } else {
        f64::NAN
    };
    let n_dim = dim as f64;
    let rellich_lhs = r * m.grad2;
    Ok(FrequencyRow {
        r,
        d,
        h: m.h,
        n: r * d / m.h,
        phi: 0.5 * weighted / r,
        flux: m.flux,
        h_prime,
        res_id1: (d - m.flux).abs() / d.max(GUARD),
        res_id2: (h_prime - (n_dim - 1.0) * m.h / r - 2.0 * m.flux).abs() / h_prime.max(GUARD),
        rellich_lhs,
        rellich_slack: rellich_lhs - (n_dim - 2.0) * d - 2.0 * r * m.normal2,
    })
}

/// `D`, `H`, `N`, `phi` and identity residuals at each radius, computed in
/// parallel and assembled in radius order.
pub fn frequency_profile<F: FieldView + ?Sized>(
    field: &F,
    center: &Point,
    radii: &[f64],
) -> Result<FrequencyProfile, FrequencyError> {
    check_center(field.dim(), center)?;
    if radii.iter().any(|r| r.is_nan() || *r <= 0.0) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FrequencyError::UnorderedRadii);
    }
    let rows: Vec<FrequencyRow> = radii
        .par_iter()
        .map(|&r| row(field, center, r))
        .collect::<Result<_, _>>()?;
    let (rows, dropped): (Vec<_>, Vec<_>) = rows.into_iter().partition(|r| r.h >= DEGENERATE_H);
    Ok(FrequencyProfile {
        center: *center,
        rows,
        dropped: dropped.into_iter().map(|r| r.r).collect(),
    })
}

/// Largest decrease of `N` between consecutive radii.
pub fn check_monotonicity(profile: &FrequencyProfile, tolerance: f64) -> MonotonicityVerdict {
    monotonicity_of(&profile.radii(), &profile.frequencies(), tolerance)
}

pub fn monotonicity_of(radii: &[f64], values: &[f64], tolerance: f64) -> MonotonicityVerdict {
    let mut worst = 0.0;
    let mut location = None;
    for i in 1..values.len().min(radii.len()) {
        let drop = values[i - 1] - values[i];
        if drop > worst {
            worst = drop;
            location = Some((radii[i - 1], radii[i]));
        }
    }
    MonotonicityVerdict {
        monotone: worst <= tolerance,
        worst_violation: worst,
        location,
    }
}

/// Clamped-set sample points `(x_1, 0)` with `x_1` in `[-r, 0]`.
fn clamp_samples(dim: usize, h: f64, r: f64) -> Vec<Point> {
    let count = (r / h).ceil() as usize;
    let mut pts = Vec::new();
    for i in 0..=count {
        let x1 = -(i as f64) * r / count.max(1) as f64;
        if dim == 2 {
            pts.push([x1, 0.0, 0.0]);
        } else {
            for j in 0..=2 * count {
                let x2 = -r + j as f64 * r / count.max(1) as f64;
                if x1 * x1 + x2 * x2 <= r * r {
                    pts.push([x1, x2, 0.0]);
                }
            }
        }
    }
    pts
}

/// `(1/r) int_{B_r^+} |grad u|^2 / |x|^{n-2}` about the origin. The field must
/// vanish (within `vanishing_tolerance`) on the clamped thin set in `B_r`.
pub fn halfball_weighted_energy<F: FieldView + ?Sized>(
    field: &F,
    r: f64,
    vanishing_tolerance: f64,
) -> Result<f64, FrequencyError> {
    let dim = field.dim();
    let h = field.spacing();
    for p in clamp_samples(dim, h, r) {
        let v = field.value_at(&p);
        if v.abs() > vanishing_tolerance {
            return Err(FrequencyError::ClampViolation { value: v, point: p });
        }
    }
    let q = Quadrature::new(dim, h);
    let total = q.ball_integral(grad2(field), &[0.0; 3], r, dim == 3)?;
    Ok(0.5 * total / r)
}

/// `|D(r) - int_{dB_r} u u_nu| / max(D(r), 1e-14)`.
pub fn first_identity_residual<F: FieldView + ?Sized>(
    field: &F,
    center: &Point,
    r: f64,
) -> Result<f64, FrequencyError> {
    check_center(field.dim(), center)?;
    Ok(row(field, center, r)?.res_id1)
}

/// `|H' - (n-1) H / r - 2 int_{dB_r} u u_nu| / max(H', 1e-14)` with `H'` a
/// centered difference of step `h`.
pub fn second_identity_residual<F: FieldView + ?Sized>(
    field: &F,
    center: &Point,
    r: f64,
) -> Result<f64, FrequencyError> {
    check_center(field.dim(), center)?;
    Ok(row(field, center, r)?.res_id2)
}

/// `r int_{dB_r} |grad u|^2 - (n-2) int_{B_r} |grad u|^2 - 2r int_{dB_r} u_nu^2`.
pub fn rellich_slack<F: FieldView + ?Sized>(field: &F, center: &Point, r: f64) -> Result<f64, FrequencyError> {
    check_center(field.dim(), center)?;
    Ok(row(field, center, r)?.rellich_slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{AnalyticField, SlitHarmonic};
    use crate::field::ScalarField;
    use crate::geometry::build_grid;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn sampled(kappa: f64, n: usize) -> ScalarField {
        let g = Arc::new(build_grid(2, 1.0 / n as f64).unwrap());
        let s = SlitHarmonic::new(kappa).unwrap();
        ScalarField::from_fn(g, |p| s.value(p[0], p[1]))
    }

    #[test]
    fn half_harmonic_frequency_is_one_half() {
        let u = sampled(0.5, 64);
        let radii = radius_range(0.1, 0.5, 0.05);
        let prof = frequency_profile(&u, &[0.0; 3], &radii).unwrap();
        for row in &prof.rows {
            assert!((row.n - 0.5).abs() < 0.02, "{row:?}");
        }
    }

    #[test]
    fn closed_form_identities() {
        let f = AnalyticField::new(0.5, 2, 1.0 / 128.0).unwrap();
        let c = [0.0; 3];
        assert!(first_identity_residual(&f, &c, 0.5).unwrap() < 0.02);
        assert!(second_identity_residual(&f, &c, 0.4).unwrap() < 0.03);
        let r = row(&f, &c, 0.5).unwrap();
        assert!((r.d - PI / 4.0).abs() < 0.01);
        assert!(r.rellich_slack.abs() < 0.03 * r.rellich_lhs);
    }

    #[test]
    fn linear_field_frequency_is_one() {
        let g = Arc::new(build_grid(2, 1.0 / 64.0).unwrap());
        let c = [0.5, 0.0, 0.0];
        let u = ScalarField::from_fn(g, |p| p[0] - c[0]);
        let prof = frequency_profile(&u, &c, &[0.0625, 0.125, 0.25]).unwrap();
        for row in &prof.rows {
            assert!((row.n - 1.0).abs() < 1e-3, "{row:?}");
        }
    }

    #[test]
    fn zero_field_profile_is_fully_dropped() {
        let g = Arc::new(build_grid(2, 1.0 / 32.0).unwrap());
        let u = ScalarField::zeros(g);
        let prof = frequency_profile(&u, &[0.0; 3], &[0.2, 0.3]).unwrap();
        assert!(prof.rows.is_empty());
        assert_eq!(prof.dropped, vec![0.2, 0.3]);
        assert_eq!(first_identity_residual(&u, &[0.0; 3], 0.3).unwrap(), 0.0);
        assert_eq!(second_identity_residual(&u, &[0.0; 3], 0.3).unwrap(), 0.0);
        assert_eq!(rellich_slack(&u, &[0.0; 3], 0.3).unwrap(), 0.0);
        assert_eq!(halfball_weighted_energy(&u, 0.3, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn rejects_negative_centers_and_bad_radii() {
        let u = sampled(0.5, 32);
        assert!(matches!(
            frequency_profile(&u, &[-0.1, 0.0, 0.0], &[0.2]),
            Err(FrequencyError::NegativeCenter(_))
        ));
        assert!(matches!(
            frequency_profile(&u, &[0.0; 3], &[0.3, 0.2]),
            Err(FrequencyError::UnorderedRadii)
        ));
        assert!(matches!(
            frequency_profile(&u, &[0.5, 0.0, 0.0], &[0.6]),
            Err(FrequencyError::Geometry(GeometryError::NotContained { .. }))
        ));
    }

    #[test]
    fn monotonicity_verdicts() {
        let v = monotonicity_of(&[0.1, 0.2], &[0.5, 0.4], 0.05);
        assert!(!v.monotone);
        assert!((v.worst_violation - 0.1).abs() < 1e-15);
        assert_eq!(v.location, Some((0.1, 0.2)));
        let v = monotonicity_of(&[0.1, 0.2], &[0.5, 0.5], 0.0);
        assert!(v.monotone);
        assert_eq!(v.worst_violation, 0.0);
    }

    #[test]
    fn weighted_half_ball_energy_of_half_harmonic() {
        let u = sampled(0.5, 64);
        for r in [0.2, 0.4, 0.6] {
            let phi = halfball_weighted_energy(&u, r, 1e-9).unwrap();
            assert!((phi - PI / 4.0).abs() / (PI / 4.0) < 0.03, "{r} {phi}");
        }
        let g = Arc::new(build_grid(2, 1.0 / 32.0).unwrap());
        let bad = ScalarField::from_fn(g, |_| 1.0);
        assert!(matches!(
            halfball_weighted_energy(&bad, 0.3, 1e-9),
            Err(FrequencyError::ClampViolation { .. })
        ));
    }
}
