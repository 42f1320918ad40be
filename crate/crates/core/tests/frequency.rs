//! Frequency, identities and blowups on closed-form fields, checked against
//! values derived by hand from the polar form `r^k cos(k theta)`.

use std::f64::consts::PI;
use std::sync::Arc;

use signorini::analytic::AnalyticField;
use signorini::blowup::{estimate_homogeneity, homogeneity_deviation, rescale};
use signorini::field::{FieldView, ScalarField};
use signorini::frequency::{frequency_profile, halfball_weighted_energy, radius_range, FrequencyError};
use signorini::geometry::build_grid;

fn polar(kappa: f64, x1: f64, xn: f64) -> f64 {
    let r = x1.hypot(xn);
    if r == 0.0 {
        0.0
    } else {
        r.powf(kappa) * (kappa * xn.abs().atan2(x1)).cos()
    }
}

fn sampled(kappa: f64, n: usize) -> ScalarField {
    let g = Arc::new(build_grid(2, 1.0 / n as f64).unwrap());
    ScalarField::from_fn(g, |p| polar(kappa, p[0], p[1]))
}

#[test]
fn exact_closed_forms_have_constant_frequency() {
    for kappa in [0.5, 1.5, 2.5, 3.5] {
        let u = AnalyticField::new(kappa, 2, 1.0 / 128.0).unwrap();
        let p = frequency_profile(&u, &[0.0; 3], &radius_range(0.1, 0.5, 0.05)).unwrap();
        for row in &p.rows {
            assert!((row.n - kappa).abs() < 0.02, "{kappa} at {}: {}", row.r, row.n);
        }
    }
}

#[test]
fn half_frequency_integrals_match_hand_values() {
    // H = pi r^2, D = pi r / 2, phi = pi / 4
    let u = sampled(0.5, 128);
    let p = frequency_profile(&u, &[0.0; 3], &[0.2, 0.3, 0.4]).unwrap();
    for row in &p.rows {
        assert!((row.h / (PI * row.r * row.r) - 1.0).abs() < 0.01, "{row:?}");
        assert!((row.d / (0.5 * PI * row.r) - 1.0).abs() < 0.03, "{row:?}");
        assert!((row.h_prime / (2.0 * PI * row.r) - 1.0).abs() < 0.03, "{row:?}");
    }
    for r in [0.2, 0.4, 0.6] {
        let phi = halfball_weighted_energy(&u, r, 1e-12).unwrap();
        assert!((phi / (0.25 * PI) - 1.0).abs() < 0.03, "{r}: {phi}");
    }
}

#[test]
fn frequency_of_an_affine_field() {
    // x1 - c1 about (c1, 0) is 1-homogeneous
    let g = Arc::new(build_grid(2, 1.0 / 64.0).unwrap());
    let c1 = 0.1;
    let u = ScalarField::from_fn(g, |p| p[0] - c1);
    let p = frequency_profile(&u, &[c1, 0.0, 0.0], &radius_range(0.1, 0.4, 0.05)).unwrap();
    for row in &p.rows {
        assert!((row.n - 1.0).abs() < 1e-3, "{row:?}");
    }
}

#[test]
fn clamped_centers_are_rejected() {
    let u = sampled(0.5, 32);
    assert!(matches!(
        frequency_profile(&u, &[-0.1, 0.0, 0.0], &[0.2]),
        Err(FrequencyError::NegativeCenter(_))
    ));
    assert!(matches!(
        frequency_profile(&u, &[0.0; 3], &[0.2, 0.1]),
        Err(FrequencyError::UnorderedRadii)
    ));
}

#[test]
fn rescaling_a_homogeneous_field_is_a_constant_multiple() {
    // the unit-sphere integral of the 1/2 form is pi
    let u = sampled(0.5, 128);
    let b = rescale(&u, &[0.0; 3], 0.5).unwrap();
    assert!((b.unit_sphere_norm() - 1.0).abs() < 1e-3);
    for p in [[0.3, 0.4, 0.0], [-0.5, 0.2, 0.0], [0.7, 0.0, 0.0]] {
        let expected = polar(0.5, p[0], p[1]) / PI.sqrt();
        assert!((b.value_at(&p) - expected).abs() < 5e-3, "{p:?}");
    }
    assert!(homogeneity_deviation(&b, 0.5).unwrap() < 0.02);
    assert!(rescale(&ScalarField::zeros(u.grid_arc().clone()), &[0.0; 3], 0.5).is_err());
}

#[test]
fn scaling_identity_on_sampled_fields() {
    for kappa in [0.5, 1.5] {
        let u = sampled(kappa, 128);
        for c in [0.0, 0.1] {
            let x0 = [c, 0.0, 0.0];
            for r in [0.2, 0.4] {
                let b = rescale(&u, &x0, r).unwrap();
                for rho in [0.25, 0.5] {
                    let lhs = frequency_profile(&b, &[0.0; 3], &[rho]).unwrap().rows[0].n;
                    let rhs = frequency_profile(&u, &x0, &[rho * r]).unwrap().rows[0].n;
                    assert!((lhs - rhs).abs() < 0.01, "{kappa} {c} {r} {rho}: {lhs} vs {rhs}");
                }
            }
        }
    }
}

#[test]
fn homogeneity_estimates_recover_the_degree() {
    for kappa in [0.5, 1.5, 2.5] {
        let u = sampled(kappa, 128);
        let est = estimate_homogeneity(&u, &[0.0; 3], (6.0 / 128.0, 0.3)).unwrap();
        assert!((est.kappa_hat - kappa).abs() < 0.02, "{kappa}: {est:?}");
        assert!((est.log_slope_kappa - kappa).abs() < 0.05, "{kappa}: {est:?}");
        assert!(!est.low_confidence);
    }
}
