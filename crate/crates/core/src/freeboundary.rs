//! Coincidence set, free boundary and fixed-boundary classification on the
//! thin plane, with frequency admissibility verdicts.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blowup::{default_window, estimate_homogeneity, HomogeneityEstimate};
use crate::field::ScalarField;
use crate::geometry::{norm, NodeClass, Point};

/// Lowest frequency any thin-plane point can have.
pub const FREQUENCY_FLOOR: f64 = 0.5;

/// Lower bound at contact points and at interior free boundary points.
pub const REGULAR_FREQUENCY: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreeBoundaryError {
    #[error("unknown point class {0:?}")]
    UnknownClass(String),
}

/// Classification of a fixed-boundary node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContactFlag {
    Contact,
    NonContact,
    NotOnFreeBoundary,
}

impl fmt::Display for ContactFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContactFlag::Contact => "CONTACT",
            ContactFlag::NonContact => "NON_CONTACT",
            ContactFlag::NotOnFreeBoundary => "NOT_ON_GAMMA",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThinDecomposition {
    pub tau_contact: f64,
    pub rho_near: f64,
    /// Thin nodes with `u <= tau_contact`.
    pub coincidence: Vec<usize>,
    /// Thin nodes with `u > tau_contact`.
    pub positivity: Vec<usize>,
    /// Coincidence nodes with a positivity neighbour inside the thin plane.
    pub free_boundary: Vec<usize>,
    /// Thin nodes with `x_1 = 0`.
    pub fixed_boundary: Vec<usize>,
    /// One flag per fixed-boundary node, in the same order.
    pub flags: Vec<ContactFlag>,
}

/// `tau_contact = max(10 tau_solve, h^2)`.
pub fn default_tau_contact(tau_solve: f64, h: f64) -> f64 {
    (10.0 * tau_solve).max(h * h)
}

/// Splits the thin nodes of `field` at `tau_contact`; `rho_near` is the
/// radius within which free boundary nodes with `x_1 > 0` make a fixed
/// boundary node a contact point.
pub fn decompose_thin(field: &ScalarField, tau_contact: f64, rho_near: f64) -> ThinDecomposition {
    let grid = field.grid();
    let u = field.values();
    let dim = grid.dim();
    let thin: Vec<usize> = (0..grid.len()).filter(|&id| grid.class(id).is_thin()).collect();
    let mut in_contact = vec![false; grid.len()];
    let mut coincidence = Vec::new();
    let mut positivity = Vec::new();
    for &id in &thin {
        if grid.class(id) == NodeClass::ThinClamped || u[id] <= tau_contact {
            in_contact[id] = true;
            coincidence.push(id);
        } else {
            positivity.push(id);
        }
    }
    let mut free_boundary = Vec::new();
    for &id in &coincidence {
        // tangential neighbours come first in the stencil, two per axis
        let touches = grid.neighbors(id)[..2 * (dim - 1)].iter().any(|&j| {
            let j = j as usize;
            grid.class(j).is_thin() && !in_contact[j]
        });
        if touches {
            free_boundary.push(id);
        }
    }
    let fixed_boundary = grid.fixed_boundary_ids();
    let flags = fixed_boundary
        .iter()
        .map(|&id| {
            let p = grid.position(id);
            let near = free_boundary.iter().any(|&g| {
                let q = grid.position(g);
                q[0] > 0.0 && distance(&p, &q) <= rho_near + 1e-12
            });
            if near {
                ContactFlag::Contact
            } else if free_boundary.binary_search(&id).is_ok() {
                ContactFlag::NonContact
            } else {
                ContactFlag::NotOnFreeBoundary
            }
        })
        .collect();
    ThinDecomposition {
        tau_contact,
        rho_near,
        coincidence,
        positivity,
        free_boundary,
        fixed_boundary,
        flags,
    }
}

fn distance(a: &Point, b: &Point) -> f64 {
    norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointClass {
    Contact,
    NonContact,
    InteriorFreeBoundary,
}

impl fmt::Display for PointClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PointClass::Contact => "CONTACT",
            PointClass::NonContact => "NON_CONTACT",
            PointClass::InteriorFreeBoundary => "INTERIOR_FB",
        })
    }
}

impl FromStr for PointClass {
    type Err = FreeBoundaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CONTACT" => Ok(PointClass::Contact),
            "NON_CONTACT" => Ok(PointClass::NonContact),
            "INTERIOR_FB" => Ok(PointClass::InteriorFreeBoundary),
            other => Err(FreeBoundaryError::UnknownClass(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub pass: bool,
    /// Distance to the nearest half-odd integer for non-contact points,
    /// `kappa_hat - 3/2` otherwise.
    pub margin: f64,
    /// Nearest admissible value `m - 1/2` for non-contact points.
    pub nearest: Option<f64>,
}

/// Frequency admissibility: at least `3/2` at contact and interior free
/// boundary points, a half-odd integer at non-contact points, and at least
/// `1/2` everywhere.
pub fn admissibility_check(class: PointClass, kappa_hat: f64, tolerance: f64) -> Admissibility {
    let floor_ok = kappa_hat >= FREQUENCY_FLOOR - tolerance;
    match class {
        PointClass::NonContact => {
            let m = (kappa_hat + 0.5).round().max(1.0);
            let nearest = m - 0.5;
            let margin = (kappa_hat - nearest).abs();
            Admissibility {
                pass: floor_ok && margin <= tolerance,
                margin,
                nearest: Some(nearest),
            }
        }
        PointClass::Contact | PointClass::InteriorFreeBoundary => Admissibility {
            pass: floor_ok && kappa_hat >= REGULAR_FREQUENCY - tolerance,
            margin: kappa_hat - REGULAR_FREQUENCY,
            nearest: None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    Unresolved,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Unresolved => "UNRESOLVED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedPoint {
    pub node: usize,
    pub location: Point,
    pub class: PointClass,
    pub estimate: Option<HomogeneityEstimate>,
    pub verdict: Verdict,
    pub admissibility: Option<Admissibility>,
    /// Error text for unresolved points.
    pub note: Option<String>,
}

impl ClassifiedPoint {
    pub fn kappa_hat(&self) -> Option<f64> {
        self.estimate.as_ref().map(|e| e.kappa_hat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationParams {
    pub tau_contact: f64,
    pub rho_near: f64,
    pub tolerance: f64,
}

impl ClassificationParams {
    /// `tau_contact = max(10 tau_solve, h^2)`, `rho_near = 3h`, tolerance 0.1.
    pub fn defaults(tau_solve: f64, h: f64) -> Self {
        ClassificationParams {
            tau_contact: default_tau_contact(tau_solve, h),
            rho_near: 3.0 * h,
            tolerance: 0.1,
        }
    }
}

/// Estimates the homogeneity at every fixed-boundary node on the free
/// boundary and at every free boundary node with `x_1 >= rho_near`, and checks
/// admissibility. Points whose estimate fails are reported as unresolved.
pub fn classify_fixed_boundary(
    field: &ScalarField,
    params: &ClassificationParams,
) -> (ThinDecomposition, Vec<ClassifiedPoint>) {
    let grid = field.grid();
    let h = grid.h();
    let dec = decompose_thin(field, params.tau_contact, params.rho_near);
    let mut targets: Vec<(usize, PointClass)> = Vec::new();
    for (&id, flag) in dec.fixed_boundary.iter().zip(&dec.flags) {
        match flag {
            ContactFlag::Contact => targets.push((id, PointClass::Contact)),
            ContactFlag::NonContact => targets.push((id, PointClass::NonContact)),
            ContactFlag::NotOnFreeBoundary => {}
        }
    }
    for &id in &dec.free_boundary {
        if grid.position(id)[0] >= params.rho_near - 1e-12 {
            targets.push((id, PointClass::InteriorFreeBoundary));
        }
    }
    targets.sort_by_key(|t| t.0);
    let points = targets
        .par_iter()
        .map(|&(id, class)| {
            let location = grid.position(id);
            match estimate_homogeneity(field, &location, default_window(h, &location)) {
                Ok(est) => {
                    let adm = admissibility_check(class, est.kappa_hat, params.tolerance);
                    ClassifiedPoint {
                        node: id,
                        location,
                        class,
                        estimate: Some(est),
                        verdict: if adm.pass { Verdict::Pass } else { Verdict::Fail },
                        admissibility: Some(adm),
                        note: None,
                    }
                }
                Err(e) => ClassifiedPoint {
                    node: id,
                    location,
                    class,
                    estimate: None,
                    verdict: Verdict::Unresolved,
                    admissibility: None,
                    note: Some(e.to_string()),
                },
            }
        })
        .collect();
    (dec, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::SlitHarmonic;
    use crate::geometry::build_grid;
    use std::sync::Arc;

    #[test]
    fn zero_field_is_all_coincidence() {
        let g = Arc::new(build_grid(2, 1.0 / 16.0).unwrap());
        let u = ScalarField::zeros(g.clone());
        let d = decompose_thin(&u, 1e-9, 3.0 / 16.0);
        let thin = (0..g.len()).filter(|&i| g.class(i).is_thin()).count();
        assert_eq!(d.coincidence.len(), thin);
        assert!(d.positivity.is_empty() && d.free_boundary.is_empty());
        assert_eq!(d.flags, vec![ContactFlag::NotOnFreeBoundary]);
    }

    #[test]
    fn three_halves_has_a_non_contact_fixed_boundary() {
        let g = Arc::new(build_grid(2, 1.0 / 32.0).unwrap());
        let s = SlitHarmonic::new(1.5).unwrap();
        let u = ScalarField::from_fn(g.clone(), |p| s.value(p[0], p[1]));
        let d = decompose_thin(&u, default_tau_contact(1e-10, g.h()), 3.0 * g.h());
        let origin = g.node_at([0, 0, 0]).unwrap();
        assert_eq!(d.free_boundary, vec![origin]);
        assert_eq!(d.flags, vec![ContactFlag::NonContact]);
        for id in g.ids_of(NodeClass::ThinClamped) {
            assert!(d.coincidence.contains(&id));
        }
    }

    #[test]
    fn larger_threshold_only_grows_the_coincidence_set() {
        let g = Arc::new(build_grid(2, 1.0 / 32.0).unwrap());
        let s = SlitHarmonic::new(1.5).unwrap();
        let u = ScalarField::from_fn(g, |p| s.value(p[0] - 0.3, p[1]));
        let a = decompose_thin(&u, 1e-9, 0.1);
        let b = decompose_thin(&u, 1e-2, 0.1);
        assert!(a.coincidence.iter().all(|id| b.coincidence.contains(id)));
        assert!(b.positivity.iter().all(|id| a.positivity.contains(id)));
    }

    #[test]
    fn admissibility_examples() {
        let a = admissibility_check(PointClass::NonContact, 0.52, 0.1);
        assert!(a.pass);
        assert_eq!(a.nearest, Some(0.5));
        assert!((a.margin - 0.02).abs() < 1e-12);
        assert!(!admissibility_check(PointClass::Contact, 1.2, 0.1).pass);
        let a = admissibility_check(PointClass::NonContact, 1.0, 0.1);
        assert!(!a.pass);
        assert!((a.margin - 0.5).abs() < 1e-12);
        assert!(admissibility_check(PointClass::InteriorFreeBoundary, 1.45, 0.1).pass);
        assert!(!admissibility_check(PointClass::NonContact, 0.3, 0.1).pass);
    }

    #[test]
    fn class_names_round_trip() {
        for c in [PointClass::Contact, PointClass::NonContact, PointClass::InteriorFreeBoundary] {
            assert_eq!(c.to_string().parse::<PointClass>().unwrap(), c);
        }
        assert!(matches!(
            "INTERIOR".parse::<PointClass>(),
            Err(FreeBoundaryError::UnknownClass(_))
        ));
    }
}
