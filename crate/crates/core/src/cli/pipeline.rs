//! Solve, analyze and judge one configured run.

use std::sync::Arc;

use serde::Serialize;

use super::config::{RadiiSpec, RunConfig, Tolerances};
use crate::analytic::Scenario;
use crate::blowup::{default_window, estimate_homogeneity, HomogeneityEstimate};
use crate::field::ScalarField;
use crate::freeboundary::{
    classify_fixed_boundary, decompose_thin, ClassificationParams, ClassifiedPoint, ContactFlag, PointClass,
    ThinDecomposition, Verdict,
};
use crate::frequency::{check_monotonicity, default_radii, frequency_profile, radius_range, FrequencyProfile, MonotonicityVerdict};
use crate::geometry::{GridSpec, Point};
use crate::regularity::{decay_exponent, subharmonicity_check, DecayFit, Part, RegularityError};
use crate::solver::{energy_minimality, MinimalityReport, SolveReport};

/// Step of the perturbation check.
pub const PERTURBATION_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct FrequencyResult {
    pub center: Point,
    #[serde(skip)]
    pub profile: Option<FrequencyProfile>,
    pub error: Option<String>,
    pub radii: usize,
    pub monotonicity: Option<MonotonicityVerdict>,
    /// Radii at or above the identity floor.
    pub judged_radii: usize,
    pub max_identity_residual: Option<f64>,
    /// Smallest `rellich_slack / rellich_lhs` over the judged radii.
    pub min_rellich_ratio: Option<f64>,
    pub n_first: Option<f64>,
    pub n_last: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupResult {
    pub point: Point,
    pub estimate: Option<HomogeneityEstimate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayResult {
    pub center: Point,
    #[serde(skip)]
    pub fit: Option<DecayFit>,
    pub alpha: Option<f64>,
    pub residual: Option<f64>,
    pub vanishing: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Invariants {
    pub subharmonicity_positive: f64,
    pub subharmonicity_negative: f64,
    pub minimality: Option<MinimalityReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictEntry {
    pub name: &'static str,
    pub pass: bool,
    /// Distance to the threshold; negative when failing.
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunEcho {
    pub name: String,
    pub dimension: usize,
    pub h: f64,
    pub seed: u64,
    pub mode: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThinCounts {
    pub tau_contact: f64,
    pub rho_near: f64,
    pub coincidence: usize,
    pub positivity: usize,
    pub free_boundary: usize,
}

/// Everything a run reports; serialized as `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run: RunEcho,
    pub scenario: Scenario,
    pub solve: Option<SolveReport>,
    pub frequency: Vec<FrequencyResult>,
    pub blowup: Vec<BlowupResult>,
    pub classification: Option<Vec<ClassifiedPoint>>,
    pub thin_set: ThinCounts,
    pub regularity: Vec<DecayResult>,
    pub invariants: Invariants,
    pub tolerances: TolerancesEcho,
    pub verdicts: Vec<VerdictEntry>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TolerancesEcho {
    pub monotonicity: f64,
    pub identity: f64,
    pub identity_floor: f64,
    pub rellich: f64,
    pub decay_floor: f64,
    pub admissibility: f64,
    pub minimality: f64,
    pub subharmonicity: f64,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Analyses of one field, kept alongside the summary for the emitters.
pub struct Analysis {
    pub summary: RunSummary,
    pub decomposition: ThinDecomposition,
}

pub fn profile_radii(spec: RadiiSpec, h: f64, center: &Point) -> Vec<f64> {
    match spec {
        RadiiSpec::Default => default_radii(h, center),
        RadiiSpec::Range { lo, hi, step } => radius_range(lo, hi, step),
    }
}

fn frequency_result(field: &ScalarField, config: &RunConfig, center: &Point) -> FrequencyResult {
    let h = field.h();
    let radii = profile_radii(config.frequency_radii, h, center);
    let mut out = FrequencyResult {
        center: *center,
        profile: None,
        error: None,
        radii: 0,
        monotonicity: None,
        judged_radii: 0,
        max_identity_residual: None,
        min_rellich_ratio: None,
        n_first: None,
        n_last: None,
    };
    match frequency_profile(field, center, &radii) {
        Err(e) => out.error = Some(e.to_string()),
        Ok(p) => {
            let floor = config.tolerances.identity_floor(h) - 1e-12;
            let judged: Vec<_> = p.rows.iter().filter(|r| r.r >= floor).collect();
            out.radii = p.rows.len();
            out.monotonicity = Some(check_monotonicity(&p, config.tolerances.monotonicity));
            out.judged_radii = judged.len();
            out.max_identity_residual = judged.iter().map(|r| r.res_id1.max(r.res_id2)).reduce(f64::max);
            out.min_rellich_ratio = judged
                .iter()
                .map(|r| r.rellich_slack / r.rellich_lhs.abs().max(1e-300))
                .reduce(f64::min);
            out.n_first = p.rows.first().map(|r| r.n);
            out.n_last = p.rows.last().map(|r| r.n);
            out.profile = Some(p);
        }
    }
    out
}

fn decay_result(field: &ScalarField, center: &Point) -> DecayResult {
    let radii = crate::regularity::default_radii(field.h());
    match decay_exponent(field, center, &radii) {
        Ok(fit) => DecayResult {
            center: *center,
            alpha: Some(fit.alpha),
            residual: Some(fit.residual),
            fit: Some(fit),
            vanishing: false,
            error: None,
        },
        Err(e) => DecayResult {
            center: *center,
            fit: None,
            alpha: None,
            residual: None,
            vanishing: matches!(e, RegularityError::Vanishing(_)),
            error: Some(e.to_string()),
        },
    }
}

fn verdict(name: &'static str, margin: f64, detail: String) -> VerdictEntry {
    VerdictEntry {
        name,
        pass: margin >= 0.0,
        margin,
        detail,
    }
}

fn failed(name: &'static str, detail: String) -> VerdictEntry {
    VerdictEntry {
        name,
        pass: false,
        margin: f64::NEG_INFINITY,
        detail,
    }
}

fn verdicts(summary: &RunSummary, tol: &Tolerances, subharmonicity_bound: f64) -> Vec<VerdictEntry> {
    let mut out = Vec::new();
    if !summary.frequency.is_empty() {
        if let Some(bad) = summary.frequency.iter().find(|f| f.error.is_some()) {
            let msg = format!("center {:?}: {}", bad.center, bad.error.as_deref().unwrap_or(""));
            out.push(failed("monotonicity", msg.clone()));
            out.push(failed("identities", msg.clone()));
            out.push(failed("rellich", msg));
        } else {
            let worst = summary
                .frequency
                .iter()
                .filter_map(|f| f.monotonicity.map(|m| m.worst_violation))
                .fold(0.0, f64::max);
            out.push(verdict(
                "monotonicity",
                tol.monotonicity - worst,
                format!("largest drop of N {worst:.3e}, allowed {}", tol.monotonicity),
            ));
            let judged: usize = summary.frequency.iter().map(|f| f.judged_radii).sum();
            if judged == 0 {
                return finish_verdicts(out, summary, tol, subharmonicity_bound);
            }
            let res = summary
                .frequency
                .iter()
                .filter_map(|f| f.max_identity_residual)
                .fold(0.0, f64::max);
            out.push(verdict(
                "identities",
                tol.identity - res,
                format!("largest relative residual {res:.3e} over {judged} radii, allowed {}", tol.identity),
            ));
            let ratio = summary
                .frequency
                .iter()
                .filter_map(|f| f.min_rellich_ratio)
                .fold(f64::INFINITY, f64::min);
            let ratio = if ratio.is_finite() { ratio } else { 0.0 };
            out.push(verdict(
                "rellich",
                ratio + tol.rellich,
                format!("smallest slack / LHS {ratio:.3e} over {judged} radii, allowed -{}", tol.rellich),
            ));
        }
    }
    finish_verdicts(out, summary, tol, subharmonicity_bound)
}

/// Verdicts that do not depend on frequency profiles.
fn finish_verdicts(
    mut out: Vec<VerdictEntry>,
    summary: &RunSummary,
    tol: &Tolerances,
    subharmonicity_bound: f64,
) -> Vec<VerdictEntry> {
    let clamped: Vec<&DecayResult> = summary.regularity.iter().filter(|d| d.center[0] <= 0.0).collect();
    if !clamped.is_empty() {
        if let Some(bad) = clamped.iter().find(|d| d.error.is_some() && !d.vanishing) {
            out.push(failed(
                "decay_floor",
                format!("center {:?}: {}", bad.center, bad.error.as_deref().unwrap_or("")),
            ));
        } else {
            let alpha = clamped.iter().filter_map(|d| d.alpha).fold(f64::INFINITY, f64::min);
            if alpha.is_finite() {
                out.push(verdict(
                    "decay_floor",
                    alpha - tol.decay_floor,
                    format!("smallest decay exponent {alpha:.4} at clamped centers, floor {}", tol.decay_floor),
                ));
            } else {
                out.push(verdict("decay_floor", 0.0, "field vanishes near every clamped center".into()));
            }
        }
    }
    if let Some(points) = &summary.classification {
        let failing: Vec<&ClassifiedPoint> = points.iter().filter(|p| p.verdict == Verdict::Fail).collect();
        let resolved = points.iter().filter(|p| p.verdict != Verdict::Unresolved).count();
        let unresolved = points.len() - resolved;
        let margin = points
            .iter()
            .filter_map(|p| p.admissibility.map(|a| (p.class, a)))
            .map(|(class, a)| match class {
                PointClass::NonContact => tol.admissibility - a.margin,
                _ => a.margin + tol.admissibility,
            })
            .fold(f64::INFINITY, f64::min);
        let margin = if margin.is_finite() { margin } else { 0.0 };
        out.push(verdict(
            "admissibility",
            margin,
            format!("{resolved} resolved points, {} failing, {unresolved} unresolved", failing.len()),
        ));
    }
    let sub = summary
        .invariants
        .subharmonicity_positive
        .max(summary.invariants.subharmonicity_negative);
    out.push(verdict(
        "subharmonicity",
        subharmonicity_bound - sub,
        format!("largest mean-value defect {sub:.3e}, allowed {subharmonicity_bound:.1e}"),
    ));
    if let Some(m) = summary.invariants.minimality {
        out.push(verdict(
            "minimality",
            tol.minimality - m.worst_decrease,
            format!(
                "largest energy decrease {:.3e} over {} perturbations of size {}",
                m.worst_decrease, m.trials, m.step
            ),
        ));
    }
    out
}

/// Runs every requested analysis on `field` and judges the results.
pub fn analyze(
    field: &ScalarField,
    config: &RunConfig,
    solve: Option<SolveReport>,
    mode: &'static str,
) -> Analysis {
    let h = field.h();
    let frequency: Vec<FrequencyResult> = config
        .frequency_centers
        .iter()
        .map(|c| frequency_result(field, config, c))
        .collect();
    let blowup = config
        .blowup_points
        .iter()
        .map(|p| match estimate_homogeneity(field, p, default_window(h, p)) {
            Ok(e) => BlowupResult {
                point: *p,
                estimate: Some(e),
                error: None,
            },
            Err(e) => BlowupResult {
                point: *p,
                estimate: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let params = ClassificationParams::defaults(config.solver.tolerance, h);
    let (decomposition, classification) = if config.classification {
        let (d, points) = classify_fixed_boundary(field, &params);
        (d, Some(points))
    } else {
        (decompose_thin(field, params.tau_contact, params.rho_near), None)
    };
    let regularity = config.regularity_centers.iter().map(|c| decay_result(field, c)).collect();
    let invariants = Invariants {
        subharmonicity_positive: subharmonicity_check(field, Part::Positive),
        subharmonicity_negative: subharmonicity_check(field, Part::Negative),
        minimality: (config.perturbations > 0)
            .then(|| energy_minimality(field, config.seed, config.perturbations, PERTURBATION_STEP)),
    };
    let tol = &config.tolerances;
    let subharmonicity_bound = tol.subharmonicity_factor * config.solver.tolerance;
    let mut summary = RunSummary {
        run: RunEcho {
            name: config.name.clone(),
            dimension: config.dimension,
            h,
            seed: config.seed,
            mode,
        },
        scenario: config.scenario.clone(),
        solve,
        frequency,
        blowup,
        classification,
        thin_set: ThinCounts {
            tau_contact: decomposition.tau_contact,
            rho_near: decomposition.rho_near,
            coincidence: decomposition.coincidence.len(),
            positivity: decomposition.positivity.len(),
            free_boundary: decomposition.free_boundary.len(),
        },
        regularity,
        invariants,
        tolerances: TolerancesEcho {
            monotonicity: tol.monotonicity,
            identity: tol.identity,
            identity_floor: tol.identity_floor(h),
            rellich: tol.rellich,
            decay_floor: tol.decay_floor,
            admissibility: tol.admissibility,
            minimality: tol.minimality,
            subharmonicity: subharmonicity_bound,
        },
        verdicts: Vec::new(),
    };
    summary.verdicts = verdicts(&summary, tol, subharmonicity_bound);
    Analysis {
        summary,
        decomposition,
    }
}

/// Label of a thin node in the profile output.
pub fn thin_label(dec: &ThinDecomposition, id: usize) -> &'static str {
    if dec.free_boundary.binary_search(&id).is_ok() {
        "GAMMA"
    } else if dec.coincidence.binary_search(&id).is_ok() {
        "LAMBDA"
    } else {
        "OMEGA"
    }
}

/// Contact flag of each fixed-boundary node.
pub fn fixed_boundary_flags(dec: &ThinDecomposition) -> Vec<(usize, ContactFlag)> {
    dec.fixed_boundary.iter().copied().zip(dec.flags.iter().copied()).collect()
}

/// Builds the grid a config describes.
pub fn config_grid(config: &RunConfig) -> Result<Arc<GridSpec>, crate::geometry::GeometryError> {
    Ok(Arc::new(GridSpec::new(config.dimension, config.h)?))
}
