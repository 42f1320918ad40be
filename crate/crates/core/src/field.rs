//! Nodal fields on the half-ball lattice and the evaluation interface shared
//! by the analysis modules.

use std::sync::Arc;

use crate::geometry::{GridSpec, NodeClass, Point};

/// Anything that can be evaluated and differentiated on the even-extended
/// unit ball. Implementations skip domain checks; callers validate balls.
pub trait FieldView: Sync {
    fn dim(&self) -> usize;
    /// Length scale that sets quadrature density and difference steps.
    fn spacing(&self) -> f64;
    fn value_at(&self, p: &Point) -> f64;
    fn gradient_at(&self, p: &Point) -> Point;
}

/// One value per lattice node of the stored half `x_n >= 0`.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<GridSpec>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
}

impl ScalarField {
    pub fn zeros(grid: Arc<GridSpec>) -> Self {
        let values = vec![0.0; grid.len()];
        ScalarField { grid, values }
    }

    pub fn from_values(grid: Arc<GridSpec>, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(ScalarField { grid, values })
    }

    /// Samples `f` at every node position.
    pub fn from_fn<F: Fn(&Point) -> f64>(grid: Arc<GridSpec>, f: F) -> Self {
        let values = (0..grid.len()).map(|id| f(&grid.position(id))).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn value(&self, id: usize) -> f64 {
        self.values[id]
    }

    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    /// Largest violation of the constraints: `|u|` on clamped nodes and
    /// `max(0, -u)` on free thin nodes.
    pub fn constraint_violation(&self) -> f64 {
        self.grid
            .classes()
            .iter()
            .zip(&self.values)
            .map(|(c, v)| match c {
                NodeClass::ThinClamped => v.abs(),
                NodeClass::ThinFree => (-v).max(0.0),
                _ => 0.0,
            })
            .fold(0.0, f64::max)
    }

    /// Values at clamped nodes are exactly zero and free thin values are
    /// nonnegative.
    pub fn is_admissible(&self) -> bool {
        self.constraint_violation() == 0.0
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

impl FieldView for ScalarField {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn spacing(&self) -> f64 {
        self.grid.h()
    }

    fn value_at(&self, p: &Point) -> f64 {
        self.grid.interpolate_values(&self.values, p)
    }

    fn gradient_at(&self, p: &Point) -> Point {
        self.grid.gradient_values(&self.values, p)
    }
}
