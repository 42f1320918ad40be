//! Constrained Dirichlet energy minimization on the half-ball lattice.
//!
//! The discrete problem minimizes the edge energy of the even-extended field
//! (see [`discrete_energy`]) over fields that carry the datum on sphere nodes,
//! vanish on clamped thin nodes and are nonnegative on free thin nodes.
//! [`minimize`] runs projected SOR; [`oracle_minimize`] enumerates active sets
//! on tiny grids and solves each pattern exactly.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{AnalyticError, Scenario};
use crate::field::ScalarField;
use crate::geometry::{norm, GridSpec, NodeClass};

/// Largest number of free thin nodes the oracle will enumerate.
pub const ORACLE_MAX_FREE: usize = 14;

/// Relative energy ties below this are treated as equal by the oracle.
const ORACLE_TIE: f64 = 1e-12;

/// Sign slack for the oracle feasibility tests.
const ORACLE_FEASIBILITY: f64 = 1e-10;

/// Number of recent sweeps used to estimate the contraction rate.
const RATE_WINDOW: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Over-relaxation factor in `[1, 2)`.
    pub omega: f64,
    /// Bound on the largest nodal update at convergence.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            omega: 1.8,
            tolerance: 1e-10,
            max_iterations: 200_000,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.omega >= 1.0 && self.omega < 2.0) {
            return Err(SolverError::InvalidParams(format!(
                "omega = {} is outside [1, 2)",
                self.omega
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(SolverError::InvalidParams(format!(
                "tolerance = {} must be positive",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidParams("max_iterations must be positive".into()));
        }
        Ok(())
    }

    /// Threshold separating contact from detached thin nodes.
    pub fn activity_threshold(&self) -> f64 {
        10.0 * self.tolerance
    }
}

/// Maxima of the three complementarity defects over free thin nodes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Complementarity {
    /// `max(0, -u)`.
    pub negativity: f64,
    /// `max(0, d_n u)` where `u` exceeds the activity threshold.
    pub detached_flux: f64,
    /// `|u d_n u|`.
    pub product: f64,
}

impl Complementarity {
    pub fn max(&self) -> f64 {
        self.negativity.max(self.detached_flux).max(self.product)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_update: f64,
    pub energy: f64,
    pub complementarity: Complementarity,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("scenario is {scenario}-dimensional but the grid is {grid}-dimensional")]
    DimensionMismatch { scenario: usize, grid: usize },
    #[error(transparent)]
    Scenario(#[from] AnalyticError),
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
    #[error("no convergence after {} sweeps (last update {:.3e})", .report.iterations, .report.final_update)]
    NotConverged {
        report: SolveReport,
        field: Box<ScalarField>,
    },
    #[error("{0} free thin nodes exceed the oracle limit of {ORACLE_MAX_FREE}")]
    OracleTooLarge(usize),
    #[error("oracle internal error: {0}")]
    OracleInternal(String),
}

/// Field with the scenario datum on sphere nodes (radially projected) and
/// zero elsewhere.
pub fn boundary_field(grid: Arc<GridSpec>, scenario: &Scenario) -> Result<ScalarField, SolverError> {
    if scenario.dimension != grid.dim() {
        return Err(SolverError::DimensionMismatch {
            scenario: scenario.dimension,
            grid: grid.dim(),
        });
    }
    scenario.check_admissible()?;
    let mut field = ScalarField::zeros(grid.clone());
    let values = field.values_mut();
    for id in grid.ids_of(NodeClass::Sphere) {
        let p = grid.position(id);
        let r = norm(&p);
        let q = [p[0] / r, p[1] / r, p[2] / r];
        values[id] = scenario.datum_at(&q);
    }
    Ok(field)
}

/// Projected SOR from the zero initial guess, sweeping nodes in index order.
///
/// Stops once the largest update is below `tolerance` and the geometric tail
/// `delta * rho / (1 - rho)` predicted from the recent contraction rate `rho`
/// is below `tolerance` as well.
pub fn minimize(
    grid: &Arc<GridSpec>,
    scenario: &Scenario,
    params: &SolverParams,
) -> Result<(ScalarField, SolveReport), SolverError> {
    params.validate()?;
    let mut field = boundary_field(grid.clone(), scenario)?;
    let sweep: Vec<(u32, bool)> = (0..grid.len())
        .filter(|&id| grid.class(id).is_unknown())
        .map(|id| (id as u32, grid.class(id) == NodeClass::ThinFree))
        .collect();
    let stencil = (2 * grid.dim()) as f64;
    let omega = params.omega;
    let tol = params.tolerance;

    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut delta = 0.0;
    let mut converged = false;
    {
        let u = field.values_mut();
        while iterations < params.max_iterations {
            delta = 0.0f64;
            for &(id, free) in &sweep {
                let id = id as usize;
                let sum: f64 = grid.neighbors(id).iter().map(|&j| u[j as usize]).sum();
                let old = u[id];
                let mut new = old + omega * (sum / stencil - old);
                if free && new < 0.0 {
                    new = 0.0;
                }
                u[id] = new;
                delta = delta.max((new - old).abs());
            }
            iterations += 1;
            history.push(delta);
            if delta == 0.0 {
                converged = true;
                break;
            }
            if delta <= tol {
                if delta <= 1e-3 * tol {
                    converged = true;
                    break;
                }
                if history.len() > RATE_WINDOW {
                    let past = history[history.len() - 1 - RATE_WINDOW];
                    let rho = (delta / past).powf(1.0 / RATE_WINDOW as f64);
                    if rho < 1.0 && delta * rho / (1.0 - rho) <= tol {
                        converged = true;
                        break;
                    }
                }
            }
        }
    }
    let report = SolveReport {
        iterations,
        final_update: delta,
        energy: energy(&field),
        complementarity: complementarity_residual(&field, params.activity_threshold()),
    };
    if converged {
        Ok((field, report))
    } else {
        Err(SolverError::NotConverged {
            report,
            field: Box::new(field),
        })
    }
}

/// `1/2 int_{B_1} |grad v|^2` over the even-extended ball, with gradients at
/// cell centers. Only cells whose corners all lie in the ball contribute.
pub fn energy(field: &ScalarField) -> f64 {
    let grid = field.grid();
    let u = field.values();
    let dim = grid.dim();
    let h = grid.h();
    let corners = 1usize << dim;
    let mut total = 0.0;
    let mut vals = [0.0f64; 8];
    for id in 0..grid.len() {
        let base = grid.index(id);
        let mut inside = true;
        for (c, slot) in vals.iter_mut().enumerate().take(corners) {
            let mut idx = base;
            for (axis, v) in idx.iter_mut().enumerate().take(dim) {
                *v += (c >> axis & 1) as i32;
            }
            match grid.node_at(idx) {
                Some(j) => *slot = u[j],
                None => {
                    inside = false;
                    break;
                }
            }
        }
        if !inside {
            continue;
        }
        let mut g2 = 0.0;
        for axis in 0..dim {
            let mut d = 0.0;
            for (c, v) in vals.iter().enumerate().take(corners) {
                if c >> axis & 1 == 1 {
                    d += v - vals[c ^ (1 << axis)];
                }
            }
            let g = d / ((corners / 2) as f64 * h);
            g2 += g * g;
        }
        total += g2;
    }
    // two mirrored halves, times 1/2
    total * h.powi(dim as i32)
}

/// The lattice energy minimized by [`minimize`] and [`oracle_minimize`]:
/// `1/2 h^(n-2)` times the sum of squared differences over all edges of the
/// even-extended lattice.
pub fn discrete_energy(field: &ScalarField) -> f64 {
    let grid = field.grid();
    let u = field.values();
    let dim = grid.dim();
    let nrm = dim - 1;
    let mut total = 0.0;
    for id in 0..grid.len() {
        let idx = grid.index(id);
        for axis in 0..dim {
            let mut up = idx;
            up[axis] += 1;
            let Some(j) = grid.node_at(up) else { continue };
            let d = u[j] - u[id];
            // edges inside the thin plane are shared with the mirror image
            let weight = if axis != nrm && idx[nrm] == 0 { 0.5 } else { 1.0 };
            total += weight * d * d;
        }
    }
    total * grid.h().powi(dim as i32 - 2)
}

/// Complementarity defects over free thin nodes. `threshold` separates
/// detached nodes from contact nodes.
pub fn complementarity_residual(field: &ScalarField, threshold: f64) -> Complementarity {
    let grid = field.grid();
    let u = field.values();
    let mut out = Complementarity::default();
    for id in grid.ids_of(NodeClass::ThinFree) {
        let v = u[id];
        let dn = grid.normal_derivative_values(u, &grid.position(id));
        out.negativity = out.negativity.max(-v);
        if v > threshold {
            out.detached_flux = out.detached_flux.max(dn);
        }
        out.product = out.product.max((v * dn).abs());
    }
    out
}

/// Outcome of random admissible perturbations of a solved field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimalityReport {
    pub trials: usize,
    pub step: f64,
    /// Largest `E(u) - E(u + t phi)` over trials and signs of `t`.
    pub worst_decrease: f64,
}

/// Perturbs `field` along random admissible directions and records the
/// largest decrease of [`discrete_energy`].
///
/// Each direction is uniform in `[-1, 1)` on interior nodes and in `[0, 1)`
/// on free thin nodes, zero elsewhere. For the negative step the thin part is
/// capped so that `u + t phi` stays nonnegative.
pub fn energy_minimality(field: &ScalarField, seed: u64, trials: usize, step: f64) -> MinimalityReport {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let grid = field.grid();
    let base = discrete_energy(field);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut trial = field.clone();
    for _ in 0..trials {
        let phi: Vec<f64> = (0..grid.len())
            .map(|id| match grid.class(id) {
                NodeClass::Interior => rng.random_range(-1.0..1.0),
                NodeClass::ThinFree => rng.random_range(0.0..1.0),
                _ => 0.0,
            })
            .collect();
        for t in [step, -step] {
            for (id, v) in trial.values_mut().iter_mut().enumerate() {
                let u = field.value(id);
                let mut d = phi[id];
                if t < 0.0 && grid.class(id) == NodeClass::ThinFree {
                    d = d.min(u / -t);
                }
                *v = u + t * d;
            }
            worst = worst.max(base - discrete_energy(&trial));
        }
    }
    MinimalityReport {
        trials,
        step,
        worst_decrease: worst,
    }
}

/// Exact minimizer found by active-set enumeration.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub field: ScalarField,
    /// Free thin node ids in index order.
    pub free_nodes: Vec<usize>,
    /// `true` where the node is held at zero.
    pub active: Vec<bool>,
    pub feasible_patterns: usize,
    /// Feasible patterns within the tie tolerance of the minimum.
    pub tied_patterns: usize,
}

/// Enumerates every active/inactive pattern over free thin nodes and returns
/// the feasible solution of least discrete energy.
///
/// Interior unknowns are eliminated once by a Cholesky factorization, which
/// leaves a Schur complement system on the free thin nodes. A pattern is
/// feasible when its inactive values are nonnegative and the reduced gradient
/// is nonnegative at active nodes (upper normal derivative `<= 0`).
pub fn oracle_minimize(grid: &Arc<GridSpec>, scenario: &Scenario) -> Result<OracleSolution, SolverError> {
    let mut field = boundary_field(grid.clone(), scenario)?;
    let free: Vec<usize> = grid.ids_of(NodeClass::ThinFree).collect();
    let k = free.len();
    if k > ORACLE_MAX_FREE {
        return Err(SolverError::OracleTooLarge(k));
    }
    let interior: Vec<usize> = grid.ids_of(NodeClass::Interior).collect();
    let mut slot = vec![usize::MAX; grid.len()];
    for (i, &id) in interior.iter().chain(free.iter()).enumerate() {
        slot[id] = i;
    }
    let m = interior.len();
    let total = m + k;
    let mut hess = DMatrix::<f64>::zeros(total, total);
    let mut rhs = DVector::<f64>::zeros(total);
    let stencil = (2 * grid.dim()) as f64;
    let known = field.values().to_vec();
    for (row, &id) in interior.iter().chain(free.iter()).enumerate() {
        // interior rows carry twice the weight of thin rows
        let scale = if grid.class(id) == NodeClass::Interior { 2.0 } else { 1.0 };
        hess[(row, row)] += scale * stencil;
        for &j in grid.neighbors(id) {
            let j = j as usize;
            if slot[j] != usize::MAX {
                hess[(row, slot[j])] -= scale;
            } else {
                rhs[row] += scale * known[j];
            }
        }
    }

    let h_ii = hess.view((0, 0), (m, m)).into_owned();
    let h_if = hess.view((0, m), (m, k)).into_owned();
    let h_ff = hess.view((m, m), (k, k)).into_owned();
    let b_i = rhs.rows(0, m).into_owned();
    let b_f = rhs.rows(m, k).into_owned();
    let chol = h_ii
        .cholesky()
        .ok_or_else(|| SolverError::OracleInternal("interior block is not positive definite".into()))?;
    let x_b = chol.solve(&b_i);
    let x_f = chol.solve(&h_if);
    let schur = &h_ff - h_if.transpose() * &x_f;
    let c = &b_f - h_if.transpose() * &x_b;

    let mut best: Option<(f64, usize, DVector<f64>, Vec<bool>)> = None;
    let mut feasible: Vec<(f64, DVector<f64>)> = Vec::new();
    for mask in 0..(1u32 << k) {
        let active: Vec<bool> = (0..k).map(|i| mask >> i & 1 == 1).collect();
        let inactive: Vec<usize> = (0..k).filter(|&i| !active[i]).collect();
        let mut uf = DVector::<f64>::zeros(k);
        if !inactive.is_empty() {
            let s = DMatrix::from_fn(inactive.len(), inactive.len(), |a, b| schur[(inactive[a], inactive[b])]);
            let cj = DVector::from_fn(inactive.len(), |a, _| c[inactive[a]]);
            let sol = s
                .cholesky()
                .ok_or_else(|| SolverError::OracleInternal("reduced system is singular".into()))?
                .solve(&cj);
            for (a, &i) in inactive.iter().enumerate() {
                uf[i] = sol[a];
            }
        }
        let grad = &schur * &uf - &c;
        let scale = c.amax().max(1.0);
        let ok = (0..k).all(|i| {
            if active[i] {
                grad[i] >= -ORACLE_FEASIBILITY * scale
            } else {
                uf[i] >= -ORACLE_FEASIBILITY * scale
            }
        });
        if !ok {
            continue;
        }
        for v in uf.iter_mut() {
            *v = v.max(0.0);
        }
        let q = 0.5 * uf.dot(&(&schur * &uf)) - c.dot(&uf);
        let n_active = active.iter().filter(|a| **a).count();
        let better = match &best {
            None => true,
            Some((bq, bn, _, _)) => {
                let tie = ORACLE_TIE * bq.abs().max(1.0);
                q < bq - tie || ((q - bq).abs() <= tie && n_active > *bn)
            }
        };
        feasible.push((q, uf.clone()));
        if better {
            best = Some((q, n_active, uf, active));
        }
    }
    let (bq, _, uf, active) =
        best.ok_or_else(|| SolverError::OracleInternal("no feasible active pattern".into()))?;
    let tie = ORACLE_TIE * bq.abs().max(1.0);
    let mut tied = 0;
    for (q, u) in &feasible {
        if (q - bq).abs() <= tie {
            tied += 1;
            if (u - &uf).amax() > 1e-8 * uf.amax().max(1.0) {
                return Err(SolverError::OracleInternal(
                    "two distinct feasible patterns attain the minimum".into(),
                ));
            }
        }
    }

    let ui = &x_b - &x_f * &uf;
    let values = field.values_mut();
    for (a, &id) in interior.iter().enumerate() {
        values[id] = ui[a];
    }
    for (a, &id) in free.iter().enumerate() {
        values[id] = uf[a];
    }
    Ok(OracleSolution {
        field,
        free_nodes: free,
        active,
        feasible_patterns: feasible.len(),
        tied_patterns: tied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::SlitHarmonic;
    use crate::geometry::build_grid;

    fn grid(n: usize) -> Arc<GridSpec> {
        Arc::new(build_grid(2, 1.0 / n as f64).unwrap())
    }

    #[test]
    fn zero_data_gives_zero_field() {
        let g = grid(16);
        let s = Scenario::constant(0.0, 2).unwrap();
        let (u, report) = minimize(&g, &s, &SolverParams::default()).unwrap();
        assert!(u.values().iter().all(|v| *v == 0.0));
        assert_eq!(report.energy, 0.0);
        assert_eq!(report.iterations, 1);
    }

    #[test]
    fn energy_of_constants_and_zero() {
        let g = grid(16);
        assert_eq!(energy(&ScalarField::zeros(g.clone())), 0.0);
        let c = ScalarField::from_fn(g.clone(), |_| 2.5);
        assert_eq!(energy(&c), 0.0);
        assert_eq!(discrete_energy(&c), 0.0);
    }

    #[test]
    fn energy_of_a_linear_field_is_half_the_area() {
        // |grad x_1|^2 = 1; cells fully inside the ball cover slightly less than pi
        let g = grid(64);
        let lin = ScalarField::from_fn(g, |p| p[0]);
        let e = energy(&lin);
        assert!(e < std::f64::consts::FRAC_PI_2 && e > 0.95 * std::f64::consts::FRAC_PI_2, "{e}");
        assert!((discrete_energy(&lin) - e).abs() / e < 0.05);
    }

    #[test]
    fn sampled_half_harmonic_energy() {
        let g = Arc::new(build_grid(2, 1.0 / 128.0).unwrap());
        let s = SlitHarmonic::new(0.5).unwrap();
        let u = ScalarField::from_fn(g, |p| s.value(p[0], p[1]));
        let e = energy(&u);
        let exact = std::f64::consts::FRAC_PI_4;
        assert!((e - exact).abs() / exact < 0.03, "{e}");
    }

    #[test]
    fn projection_is_exact_and_complementarity_small() {
        let g = grid(32);
        let params = SolverParams::default();
        let s = Scenario::shifted_slit(1.5, 0.3, 2).unwrap();
        let (u, report) = minimize(&g, &s, &params).unwrap();
        assert!(u.is_admissible());
        let bound = 10.0 * params.tolerance / g.h();
        assert!(report.complementarity.max() <= bound, "{:?}", report.complementarity);
        assert_eq!(report.energy, energy(&u));
    }

    #[test]
    fn complementarity_of_zero_field() {
        let g = grid(16);
        let c = complementarity_residual(&ScalarField::zeros(g), 1e-9);
        assert_eq!(c, Complementarity::default());
    }

    #[test]
    fn solver_is_deterministic() {
        let g = grid(24);
        let s = Scenario::constant(1.0, 2).unwrap();
        let p = SolverParams::default();
        let (a, _) = minimize(&g, &s, &p).unwrap();
        let (b, _) = minimize(&g, &s, &p).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = grid(32);
        let s = Scenario::constant(1.0, 2).unwrap();
        let p = SolverParams {
            max_iterations: 5,
            ..SolverParams::default()
        };
        match minimize(&g, &s, &p) {
            Err(SolverError::NotConverged { report, .. }) => assert_eq!(report.iterations, 5),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_params_and_dimension() {
        let g = grid(16);
        let s = Scenario::constant(1.0, 3).unwrap();
        assert!(matches!(
            minimize(&g, &s, &SolverParams::default()),
            Err(SolverError::DimensionMismatch { .. })
        ));
        let s = Scenario::constant(1.0, 2).unwrap();
        let p = SolverParams {
            omega: 2.0,
            ..SolverParams::default()
        };
        assert!(matches!(minimize(&g, &s, &p), Err(SolverError::InvalidParams(_))));
    }

    #[test]
    fn solved_fields_are_local_minima() {
        let g = grid(32);
        let (u, _) = minimize(&g, &Scenario::shifted_slit(1.5, 0.3, 2).unwrap(), &SolverParams::default()).unwrap();
        let r = energy_minimality(&u, 7, 20, 1e-3);
        assert!(r.worst_decrease <= 1e-8, "{r:?}");
        assert_eq!(r, energy_minimality(&u, 7, 20, 1e-3));
    }

    #[test]
    fn oracle_zero_data_is_fully_active() {
        let g = grid(8);
        let o = oracle_minimize(&g, &Scenario::constant(0.0, 2).unwrap()).unwrap();
        assert!(o.active.iter().all(|a| *a));
        assert!(o.field.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn oracle_constant_data_is_fully_inactive() {
        let g = grid(10);
        let o = oracle_minimize(&g, &Scenario::constant(1.0, 2).unwrap()).unwrap();
        assert!(o.active.iter().all(|a| !*a));
        assert_eq!(o.tied_patterns, 1);
    }

    #[test]
    fn oracle_rejects_large_grids() {
        let g = grid(32);
        assert!(matches!(
            oracle_minimize(&g, &Scenario::constant(1.0, 2).unwrap()),
            Err(SolverError::OracleTooLarge(_))
        ));
    }
}
