//! Decay exponents near the clamped set, discrete subharmonicity of the
//! positive and negative parts, and stability under boundary perturbations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::Scenario;
use crate::field::ScalarField;
use crate::fit::fit_line;
use crate::geometry::{norm, GeometryError, NodeClass, Point, Quadrature};

/// Default fit radii.
pub const DEFAULT_RADII: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

/// Radius of the ball on which the interior gap is measured.
pub const STABILITY_RADIUS: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularityError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("radius {radius} is outside [{min}, 0.4]")]
    RadiusOutOfRange { radius: f64, min: f64 },
    #[error("field vanishes on the ball of radius {0}; no decay fit")]
    Vanishing(f64),
    #[error("a decay fit needs at least two radii, got {0}")]
    TooFewRadii(usize),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("identical boundary data produced fields {0:e} apart")]
    NonDeterministic(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub center: Point,
    pub radii: Vec<f64>,
    /// `sup_{B_r} |u|` over lattice nodes of the even-extended ball.
    pub sups: Vec<f64>,
    /// Slope of `log sup` against `log r`.
    pub alpha: f64,
    pub residual: f64,
}

/// The default radii that are at least `4h`.
pub fn default_radii(h: f64) -> Vec<f64> {
    DEFAULT_RADII.iter().copied().filter(|r| *r >= 4.0 * h - 1e-12).collect()
}

/// Least-squares decay exponent of `sup_{B_r(center)} |u|`.
pub fn decay_exponent(field: &ScalarField, center: &Point, radii: &[f64]) -> Result<DecayFit, RegularityError> {
    let grid = field.grid();
    let h = grid.h();
    let dim = grid.dim();
    if radii.len() < 2 {
        return Err(RegularityError::TooFewRadii(radii.len()));
    }
    for &r in radii {
        if !(r >= 4.0 * h - 1e-12 && r <= 0.4 + 1e-12) {
            return Err(RegularityError::RadiusOutOfRange { radius: r, min: 4.0 * h });
        }
        if norm(center) + r > 1.0 + 1e-12 {
            return Err(GeometryError::NotContained {
                center: *center,
                radius: r,
            }
            .into());
        }
    }
    let mut sups = vec![0.0f64; radii.len()];
    let u = field.values();
    for (id, &v) in u.iter().enumerate() {
        let p = grid.position(id);
        // nearer of the node and its mirror image
        let mut d2 = 0.0;
        for axis in 0..dim - 1 {
            d2 += (p[axis] - center[axis]).powi(2);
        }
        let dn = (p[dim - 1] - center[dim - 1].abs()).abs();
        d2 += dn * dn;
        let dist = d2.sqrt();
        for (s, &r) in sups.iter_mut().zip(radii) {
            if dist <= r + 1e-12 {
                *s = s.max(v.abs());
            }
        }
    }
    let largest = radii.iter().cloned().fold(0.0, f64::max);
    let (x, y): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(&sups)
        .filter(|(_, s)| **s > 0.0)
        .map(|(r, s)| (r.ln(), s.ln()))
        .unzip();
    let line = fit_line(&x, &y).ok_or(RegularityError::Vanishing(largest))?;
    Ok(DecayFit {
        center: *center,
        radii: radii.to_vec(),
        sups,
        alpha: line.slope,
        residual: line.residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Positive,
    Negative,
}

/// `max (w_i - mean_j w_j)` over non-sphere nodes, where `w` is `u+` or `u-`
/// and `j` runs over the even-reflected stencil. Subharmonic parts give
/// values `<= 0`.
pub fn subharmonicity_check(field: &ScalarField, part: Part) -> f64 {
    let grid = field.grid();
    let u = field.values();
    let w = |v: f64| match part {
        Part::Positive => v.max(0.0),
        Part::Negative => (-v).max(0.0),
    };
    let stencil = (2 * grid.dim()) as f64;
    let mut worst = f64::NEG_INFINITY;
    for id in 0..grid.len() {
        if grid.class(id) == NodeClass::Sphere {
            continue;
        }
        let mean = grid.neighbors(id).iter().map(|&j| w(u[j as usize])).sum::<f64>() / stencil;
        worst = worst.max(w(u[id]) - mean);
    }
    worst.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `sup_{|x| <= 1/2} |u_1 - u_2|` over nodes.
    pub interior_gap: f64,
    /// `int_{dB_1} (g_1 - g_2)^2`.
    pub boundary_gap: f64,
    /// `interior_gap / boundary_gap`, or 0 when the data agree.
    pub ratio: f64,
}

/// Interior response to a change of boundary data. Identical data must give
/// fields within `tolerance` of each other.
pub fn boundary_stability(
    field1: &ScalarField,
    field2: &ScalarField,
    datum1: &Scenario,
    datum2: &Scenario,
    tolerance: f64,
) -> Result<StabilityReport, RegularityError> {
    let grid = field1.grid();
    if field1.grid_arc().len() != field2.grid_arc().len()
        || grid.dim() != field2.grid().dim()
        || grid.resolution() != field2.grid().resolution()
    {
        return Err(RegularityError::GridMismatch);
    }
    let mut interior_gap = 0.0f64;
    for id in 0..grid.len() {
        if norm(&grid.position(id)) <= STABILITY_RADIUS + 1e-12 {
            interior_gap = interior_gap.max((field1.value(id) - field2.value(id)).abs());
        }
    }
    let q = Quadrature::new(grid.dim(), grid.h());
    let boundary_gap = q.sphere_integral(
        |p| {
            let d = datum1.datum_at(p) - datum2.datum_at(p);
            d * d
        },
        &[0.0; 3],
        1.0,
        None,
    )?;
    if boundary_gap == 0.0 {
        if interior_gap > tolerance {
            return Err(RegularityError::NonDeterministic(interior_gap));
        }
        return Ok(StabilityReport {
            interior_gap,
            boundary_gap,
            ratio: 0.0,
        });
    }
    Ok(StabilityReport {
        interior_gap,
        boundary_gap,
        ratio: interior_gap / boundary_gap,
    })
}
