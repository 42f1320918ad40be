//! Symmetrized half-ball lattice, node classification, interpolation and
//! quadrature over spheres and balls.
//!
//! Only the half `x_n >= 0` of the unit ball is stored. Values at `x_n < 0`
//! are implied by even reflection, so every evaluation first maps the point
//! to `|x_n|`. Coordinates live in a fixed `[f64; 3]`; in two dimensions the
//! third slot is unused and the thin (normal) axis is index 1.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::ScalarField;

/// A point of `R^n`, `n` in `{2, 3}`. Unused trailing slots are zero.
pub type Point = [f64; 3];

/// Sentinel for lattice positions outside the closed unit ball.
const NO_NODE: u32 = u32::MAX;

/// Slack used when testing geometric containment of floating point data.
const CONTAINMENT_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension {0} is not supported (expected 2 or 3)")]
    UnsupportedDimension(usize),
    #[error("1/h = {0} is not an integer")]
    NonIntegerResolution(f64),
    #[error("1/h = {0} is below the minimum resolution of 8")]
    ResolutionTooCoarse(usize),
    #[error("point {0:?} lies outside the closed unit ball")]
    OutsideBall(Point),
    #[error("point {point:?} is within {margin} of the outer sphere")]
    NearBoundary { point: Point, margin: f64 },
    #[error("ball of radius {radius} around {center:?} is not contained in the domain")]
    NotContained { center: Point, radius: f64 },
    #[error("center {0:?} is not on the thin hyperplane x_n = 0")]
    OffThinPlane(Point),
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("radius {radius} is smaller than the grid spacing {h} required for the weighted inner shell")]
    RadiusBelowSpacing { radius: f64, h: f64 },
}

/// Role of a lattice node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeClass {
    /// `|x| <= 1 - h`, `x_n > 0`.
    Interior,
    /// `|x|` in `(1 - h, 1]`; carries Dirichlet data.
    Sphere,
    /// `x_n = 0`, `x_1 > 0`, `|x| <= 1 - h`.
    ThinFree,
    /// `x_n = 0`, `x_1 <= 0`, `|x| <= 1 - h`.
    ThinClamped,
}

impl NodeClass {
    pub fn is_thin(self) -> bool {
        matches!(self, NodeClass::ThinFree | NodeClass::ThinClamped)
    }

    /// Nodes whose value is determined by the relaxation sweep.
    pub fn is_unknown(self) -> bool {
        matches!(self, NodeClass::Interior | NodeClass::ThinFree)
    }
}

/// Uniform Cartesian lattice covering the closed upper half unit ball.
#[derive(Debug, Clone)]
pub struct GridSpec {
    dim: usize,
    resolution: usize,
    h: f64,
    indices: Vec<[i32; 3]>,
    classes: Vec<NodeClass>,
    lookup: Vec<u32>,
    sizes: [usize; 3],
    strides: [usize; 3],
    neighbors: Vec<[u32; 6]>,
}

/// Builds the lattice for dimension `dim` and spacing `h`.
pub fn build_grid(dim: usize, h: f64) -> Result<GridSpec, GeometryError> {
    GridSpec::new(dim, h)
}

impl GridSpec {
    pub fn new(dim: usize, h: f64) -> Result<Self, GeometryError> {
        if dim != 2 && dim != 3 {
            return Err(GeometryError::UnsupportedDimension(dim));
        }
        let resolution = resolution_from_spacing(h)?;
        Ok(Self::with_resolution(dim, resolution))
    }

    /// Lattice with `1/h = resolution`; panics only on invalid arguments that
    /// [`GridSpec::new`] would have rejected.
    fn with_resolution(dim: usize, resolution: usize) -> Self {
        let n = resolution as i32;
        let mut sizes = [1usize; 3];
        for (axis, size) in sizes.iter_mut().enumerate().take(dim) {
            *size = if axis == dim - 1 {
                resolution + 1
            } else {
                2 * resolution + 1
            };
        }
        let strides = [1, sizes[0], sizes[0] * sizes[1]];
        let total = sizes[0] * sizes[1] * sizes[2];
        let mut lookup = vec![NO_NODE; total];
        let mut indices = Vec::new();
        let mut classes = Vec::new();

        let outer = n * n;
        let inner = (n - 1) * (n - 1);
        let (r1, r2) = if dim == 2 { (0..=n, 0..=0) } else { (-n..=n, 0..=n) };
        // Sweep order: normal axis slowest, x_1 fastest.
        for k_last in r2.clone() {
            for k_mid in r1.clone() {
                for i1 in -n..=n {
                    let idx = if dim == 2 {
                        [i1, k_mid, 0]
                    } else {
                        [i1, k_mid, k_last]
                    };
                    let s: i32 = idx.iter().map(|v| v * v).sum();
                    if s > outer {
                        continue;
                    }
                    let normal = idx[dim - 1];
                    let class = if s > inner {
                        NodeClass::Sphere
                    } else if normal == 0 {
                        if idx[0] <= 0 {
                            NodeClass::ThinClamped
                        } else {
                            NodeClass::ThinFree
                        }
                    } else {
                        NodeClass::Interior
                    };
                    let dense = dense_index(&idx, dim, resolution, &strides);
                    lookup[dense] = indices.len() as u32;
                    indices.push(idx);
                    classes.push(class);
                }
            }
        }

        let mut grid = GridSpec {
            dim,
            resolution,
            h: 1.0 / resolution as f64,
            indices,
            classes,
            lookup,
            sizes,
            strides,
            neighbors: Vec::new(),
        };
        grid.neighbors = (0..grid.len()).map(|id| grid.compute_neighbors(id)).collect();
        grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `1/h`.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn normal_axis(&self) -> usize {
        self.dim - 1
    }

    pub fn class(&self, id: usize) -> NodeClass {
        self.classes[id]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    /// Integer lattice index of a node.
    pub fn index(&self, id: usize) -> [i32; 3] {
        self.indices[id]
    }

    /// Coordinates `index * h`.
    pub fn position(&self, id: usize) -> Point {
        let idx = self.indices[id];
        [
            idx[0] as f64 * self.h,
            idx[1] as f64 * self.h,
            idx[2] as f64 * self.h,
        ]
    }

    /// Node id at a lattice index, reflecting negative normal indices.
    pub fn node_at(&self, idx: [i32; 3]) -> Option<usize> {
        let mut idx = idx;
        let nrm = self.dim - 1;
        idx[nrm] = idx[nrm].abs();
        let n = self.resolution as i32;
        for (axis, v) in idx.iter().enumerate() {
            if axis >= self.dim {
                if *v != 0 {
                    return None;
                }
            } else if v.abs() > n {
                return None;
            }
        }
        let id = self.lookup[dense_index(&idx, self.dim, self.resolution, &self.strides)];
        (id != NO_NODE).then_some(id as usize)
    }

    pub fn ids_of(&self, class: NodeClass) -> impl Iterator<Item = usize> + '_ {
        self.classes
            .iter()
            .enumerate()
            .filter(move |(_, c)| **c == class)
            .map(|(i, _)| i)
    }

    pub fn count(&self, class: NodeClass) -> usize {
        self.classes.iter().filter(|c| **c == class).count()
    }

    /// The `2n` stencil neighbours of a non-sphere node. A thin node lists its
    /// upper neighbour twice (even reflection of the lower one).
    pub fn neighbors(&self, id: usize) -> &[u32] {
        &self.neighbors[id][..2 * self.dim]
    }

    fn compute_neighbors(&self, id: usize) -> [u32; 6] {
        let mut out = [NO_NODE; 6];
        if self.classes[id] == NodeClass::Sphere {
            return out;
        }
        let idx = self.indices[id];
        let mut k = 0;
        for axis in 0..self.dim {
            for step in [-1, 1] {
                let mut nb = idx;
                nb[axis] += step;
                // Every non-sphere node has |x| <= 1 - h, so its neighbours are in the ball.
                out[k] = self.node_at(nb).expect("stencil neighbour inside ball") as u32;
                k += 1;
            }
        }
        out
    }

    /// Node ids on the fixed boundary `{x_1 = 0, x_n = 0}` (thin, non-sphere).
    pub fn fixed_boundary_ids(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&id| self.classes[id].is_thin() && self.indices[id][0] == 0)
            .collect()
    }

    /// Reflects a point to the stored half.
    pub fn reflect(&self, p: &Point) -> Point {
        let mut q = *p;
        q[self.dim - 1] = q[self.dim - 1].abs();
        q
    }

    /// Multilinear interpolation of nodal `values` at `p`, without domain checks.
    ///
    /// Cells that straddle the outer sphere use the in-ball corners only, with
    /// their weights renormalized.
    pub fn interpolate_values(&self, values: &[f64], p: &Point) -> f64 {
        let dim = self.dim;
        let q = self.reflect(p);
        let mut base = [0i32; 3];
        let mut frac = [0.0f64; 3];
        let n = self.resolution as i32;
        for axis in 0..dim {
            let offset = if axis == dim - 1 { 0 } else { n };
            let t = q[axis] / self.h + offset as f64;
            let max_base = self.sizes[axis] as i32 - 2;
            let b = (t.floor() as i32).clamp(0, max_base);
            base[axis] = b - offset;
            frac[axis] = t - b as f64;
        }
        let mut acc = 0.0;
        let mut wsum = 0.0;
        let mut missing = false;
        for corner in 0..(1usize << dim) {
            let mut idx = base;
            let mut w = 1.0;
            for axis in 0..dim {
                if corner >> axis & 1 == 1 {
                    idx[axis] += 1;
                    w *= frac[axis];
                } else {
                    w *= 1.0 - frac[axis];
                }
            }
            let dense = dense_index(&idx, dim, self.resolution, &self.strides);
            let id = self.lookup[dense];
            if id == NO_NODE {
                missing = true;
                continue;
            }
            acc += w * values[id as usize];
            wsum += w;
        }
        if missing && wsum > 0.0 {
            acc / wsum
        } else {
            acc
        }
    }

    /// Gradient of the interpolated field by centered differences of step `h`.
    ///
    /// The normal component is odd under reflection and zero on the thin
    /// plane. Within one cell of the thin plane the normal difference does not
    /// cross it: it uses `(u(y + h) - u(0)) / (y + h)`, which is exact for
    /// fields that are linear in `|x_n|`.
    pub fn gradient_values(&self, values: &[f64], p: &Point) -> Point {
        let dim = self.dim;
        let h = self.h;
        let mut g = [0.0; 3];
        for (axis, slot) in g.iter_mut().enumerate().take(dim - 1) {
            let mut a = *p;
            let mut b = *p;
            a[axis] += h;
            b[axis] -= h;
            *slot = (self.interpolate_values(values, &a) - self.interpolate_values(values, &b))
                / (2.0 * h);
        }
        let nrm = dim - 1;
        let y = p[nrm].abs();
        if y > 0.0 {
            let mut up = *p;
            up[nrm] = y + h;
            let upper = self.interpolate_values(values, &up);
            let d = if y >= h {
                let mut lo = *p;
                lo[nrm] = y - h;
                (upper - self.interpolate_values(values, &lo)) / (2.0 * h)
            } else {
                let mut lo = *p;
                lo[nrm] = 0.0;
                (upper - self.interpolate_values(values, &lo)) / (y + h)
            };
            g[nrm] = if p[nrm] < 0.0 { -d } else { d };
        }
        g
    }

    /// Discrete upper normal derivative at a thin-plane point: the one-sided
    /// difference corrected by the tangential Laplacian,
    /// `(2 u(p + h e_n) + sum_t [u(p + h e_t) + u(p - h e_t)] - 2n u(p)) / (2h)`.
    ///
    /// At nodes this is `-(n/h)` times the reflected-stencil residual, so it
    /// vanishes exactly where the thin equation is satisfied.
    pub fn normal_derivative_values(&self, values: &[f64], p: &Point) -> f64 {
        let dim = self.dim;
        let h = self.h;
        let nrm = dim - 1;
        let center = self.interpolate_values(values, p);
        let mut up = *p;
        up[nrm] = h;
        let mut sum = 2.0 * self.interpolate_values(values, &up);
        for axis in 0..nrm {
            let mut a = *p;
            let mut b = *p;
            a[axis] += h;
            b[axis] -= h;
            sum += self.interpolate_values(values, &a) + self.interpolate_values(values, &b);
        }
        (sum - 2.0 * dim as f64 * center) / (2.0 * h)
    }

    pub fn quadrature(&self) -> Quadrature {
        Quadrature {
            dim: self.dim,
            h: self.h,
        }
    }
}

fn dense_index(idx: &[i32; 3], dim: usize, resolution: usize, strides: &[usize; 3]) -> usize {
    let n = resolution as i32;
    let mut d = 0usize;
    for axis in 0..dim {
        let offset = if axis == dim - 1 { 0 } else { n };
        d += (idx[axis] + offset) as usize * strides[axis];
    }
    d
}

/// Validates `1/h` and returns it as an integer.
pub fn resolution_from_spacing(h: f64) -> Result<usize, GeometryError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(GeometryError::NonIntegerResolution(1.0 / h));
    }
    let inv = 1.0 / h;
    let rounded = inv.round();
    if (inv - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(GeometryError::NonIntegerResolution(inv));
    }
    let n = rounded as usize;
    if n < 8 {
        return Err(GeometryError::ResolutionTooCoarse(n));
    }
    Ok(n)
}

pub fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Even reflection `x_n -> -x_n`.
pub fn mirror(p: &Point, dim: usize) -> Point {
    let mut q = *p;
    q[dim - 1] = -q[dim - 1];
    q
}

/// A point of the thin hyperplane with the given tangential coordinates.
pub fn thin_point(dim: usize, x1: f64, x2: f64) -> Point {
    if dim == 2 {
        [x1, 0.0, 0.0]
    } else {
        [x1, x2, 0.0]
    }
}

/// Interpolates a field, evaluating `x_n < 0` by even reflection.
pub fn interpolate(field: &ScalarField, point: &Point) -> Result<f64, GeometryError> {
    if norm(point) > 1.0 + CONTAINMENT_SLACK {
        return Err(GeometryError::OutsideBall(*point));
    }
    Ok(field.grid().interpolate_values(field.values(), point))
}

/// Centered-difference gradient of the interpolated field.
pub fn gradient(field: &ScalarField, point: &Point) -> Result<Point, GeometryError> {
    let grid = field.grid();
    let margin = 2.0 * grid.h();
    if norm(point) > 1.0 - margin + CONTAINMENT_SLACK {
        return Err(GeometryError::NearBoundary {
            point: *point,
            margin,
        });
    }
    Ok(grid.gradient_values(field.values(), point))
}

/// Upper normal derivative on the thin plane, see
/// [`GridSpec::normal_derivative_values`].
pub fn normal_derivative_thin(field: &ScalarField, point: &Point) -> Result<f64, GeometryError> {
    let grid = field.grid();
    if point[grid.normal_axis()].abs() > CONTAINMENT_SLACK {
        return Err(GeometryError::OffThinPlane(*point));
    }
    if norm(point) > 1.0 - grid.h() + CONTAINMENT_SLACK {
        return Err(GeometryError::NearBoundary {
            point: *point,
            margin: grid.h(),
        });
    }
    Ok(grid.normal_derivative_values(field.values(), point))
}

/// Sample directions and weights for a sphere centered on the thin plane.
///
/// Two dimensions: `M` uniform angles offset by half a step, so no sample
/// falls on the thin plane. Three dimensions: midpoint latitudes about the
/// `x_n` axis weighted by the exact band area, times `M` uniform longitudes.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    pub center: Point,
    pub radius: f64,
    pub points: Vec<Point>,
    pub normals: Vec<Point>,
    pub weights: Vec<f64>,
}

impl SphereQuadrature {
    pub fn new(dim: usize, center: Point, radius: f64, samples: usize) -> Self {
        let m = samples.max(2);
        let mut points = Vec::new();
        let mut normals = Vec::new();
        let mut weights = Vec::new();
        if dim == 2 {
            let w = 2.0 * PI * radius / m as f64;
            for k in 0..m {
                let theta = (k as f64 + 0.5) * 2.0 * PI / m as f64;
                let nu = [theta.cos(), theta.sin(), 0.0];
                points.push([center[0] + radius * nu[0], center[1] + radius * nu[1], 0.0]);
                normals.push(nu);
                weights.push(w);
            }
        } else {
            // an even latitude count keeps samples off the equator
            let lat = (m / 2).max(2).div_ceil(2) * 2;
            let dphi = 2.0 * PI / m as f64;
            for j in 0..lat {
                let t0 = j as f64 * PI / lat as f64;
                let t1 = (j + 1) as f64 * PI / lat as f64;
                let theta = 0.5 * (t0 + t1);
                let band = t0.cos() - t1.cos();
                let w = radius * radius * band * dphi;
                let (st, ct) = theta.sin_cos();
                for k in 0..m {
                    let phi = (k as f64 + 0.5) * dphi;
                    let nu = [st * phi.cos(), st * phi.sin(), ct];
                    points.push([
                        center[0] + radius * nu[0],
                        center[1] + radius * nu[1],
                        center[2] + radius * nu[2],
                    ]);
                    normals.push(nu);
                    weights.push(w);
                }
            }
        }
        SphereQuadrature {
            center,
            radius,
            points,
            normals,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate<F: Fn(&Point) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }
}

/// Measure of the sphere of radius `r` in `R^dim`.
pub fn sphere_measure(dim: usize, r: f64) -> f64 {
    if dim == 2 {
        2.0 * PI * r
    } else {
        4.0 * PI * r * r
    }
}

/// Quadrature rules tied to a lattice spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub dim: usize,
    pub h: f64,
}

impl Quadrature {
    pub fn new(dim: usize, h: f64) -> Self {
        Quadrature { dim, h }
    }

    /// Default longitude count: `max(64, ceil(2 pi r / h))` in two dimensions,
    /// `max(16, ceil(2 pi r / h))` in three, rounded up to even.
    pub fn default_samples(&self, radius: f64) -> usize {
        let floor = if self.dim == 2 { 64 } else { 16 };
        let m = ((2.0 * PI * radius / self.h).ceil() as usize).max(floor);
        m + m % 2
    }

    pub fn sphere(&self, center: Point, radius: f64) -> SphereQuadrature {
        SphereQuadrature::new(self.dim, center, radius, self.default_samples(radius))
    }

    fn check_ball(&self, center: &Point, radius: f64) -> Result<(), GeometryError> {
        if radius.is_nan() || radius <= 0.0 {
            return Err(GeometryError::NonPositiveRadius(radius));
        }
        if center[self.dim - 1].abs() > CONTAINMENT_SLACK {
            return Err(GeometryError::OffThinPlane(*center));
        }
        if norm(center) + radius > 1.0 + CONTAINMENT_SLACK {
            return Err(GeometryError::NotContained {
                center: *center,
                radius,
            });
        }
        Ok(())
    }

    /// `int_{dB_r(c)} f`. `samples` overrides the default count.
    pub fn sphere_integral<F: Fn(&Point) -> f64>(
        &self,
        f: F,
        center: &Point,
        radius: f64,
        samples: Option<usize>,
    ) -> Result<f64, GeometryError> {
        self.check_ball(center, radius)?;
        let m = samples.unwrap_or_else(|| self.default_samples(radius));
        Ok(SphereQuadrature::new(self.dim, *center, radius, m).integrate(f))
    }

    /// `int_{B_r(c)} f`, or `int_{B_r(c)} f / |x - c|^{n-2}` when `weighted`.
    ///
    /// Shells of width at most `h/2`; each shell contributes its mean over the
    /// midpoint sphere times its exact (weighted) volume. For the weighted
    /// integral in three dimensions the ball of radius `h` is integrated with
    /// the integrand frozen at radius `h`.
    pub fn ball_integral<F: Fn(&Point) -> f64>(
        &self,
        f: F,
        center: &Point,
        radius: f64,
        weighted: bool,
    ) -> Result<f64, GeometryError> {
        self.check_ball(center, radius)?;
        let singular = weighted && self.dim == 3;
        let mut total = 0.0;
        let start = if singular {
            if radius < self.h {
                return Err(GeometryError::RadiusBelowSpacing {
                    radius,
                    h: self.h,
                });
            }
            let inner = self.sphere(*center, self.h);
            let mean = inner.integrate(&f) / sphere_measure(3, self.h);
            // int_{B_h} 1/|x| = 2 pi h^2
            total += mean * 2.0 * PI * self.h * self.h;
            self.h
        } else {
            0.0
        };
        let span = radius - start;
        if span <= 0.0 {
            return Ok(total);
        }
        let shells = (span / (0.5 * self.h)).ceil().max(1.0) as usize;
        let width = span / shells as f64;
        for k in 0..shells {
            let r0 = start + k as f64 * width;
            let r1 = r0 + width;
            let rm = 0.5 * (r0 + r1);
            let sphere = self.sphere(*center, rm);
            let mean = sphere.integrate(&f) / sphere_measure(self.dim, rm);
            total += mean * self.shell_volume(r0, r1, singular);
        }
        Ok(total)
    }

    fn shell_volume(&self, r0: f64, r1: f64, weighted: bool) -> f64 {
        match (self.dim, weighted) {
            (2, _) => PI * (r1 * r1 - r0 * r0),
            (_, false) => 4.0 / 3.0 * PI * (r1.powi(3) - r0.powi(3)),
            (_, true) => 2.0 * PI * (r1 * r1 - r0 * r0),
        }
    }
}

/// `int_{dB_r(c)} f` with the default sample count for spacing `h`.
pub fn sphere_integral<F: Fn(&Point) -> f64>(
    dim: usize,
    h: f64,
    f: F,
    center: &Point,
    radius: f64,
    samples: Option<usize>,
) -> Result<f64, GeometryError> {
    Quadrature::new(dim, h).sphere_integral(f, center, radius, samples)
}

/// `int_{B_r(c)} f` (optionally weighted by `|x - c|^{2-n}`).
pub fn ball_integral<F: Fn(&Point) -> f64>(
    dim: usize,
    h: f64,
    f: F,
    center: &Point,
    radius: f64,
    weighted: bool,
) -> Result<f64, GeometryError> {
    Quadrature::new(dim, h).ball_integral(f, center, radius, weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn grid2(n: usize) -> Arc<GridSpec> {
        Arc::new(build_grid(2, 1.0 / n as f64).unwrap())
    }

    #[test]
    fn clamped_nodes_cover_nonpositive_axis() {
        let g = grid2(8);
        let clamped: Vec<i32> = g
            .ids_of(NodeClass::ThinClamped)
            .map(|id| g.index(id)[0])
            .collect();
        assert_eq!(clamped, (-7..=0).collect::<Vec<_>>());
        // x_1 = -1 is on the outer shell and carries Dirichlet data
        let far = g.node_at([-8, 0, 0]).unwrap();
        assert_eq!(g.class(far), NodeClass::Sphere);
    }

    #[test]
    fn first_positive_thin_node_is_free() {
        let g = grid2(8);
        let id = g.node_at([1, 0, 0]).unwrap();
        assert_eq!(g.class(id), NodeClass::ThinFree);
        assert_eq!(g.position(id), [0.125, 0.0, 0.0]);
        let origin = g.node_at([0, 0, 0]).unwrap();
        assert_eq!(g.class(origin), NodeClass::ThinClamped);
    }

    #[test]
    fn rejects_bad_spacing_and_dimension() {
        assert!(matches!(
            build_grid(2, 0.3),
            Err(GeometryError::NonIntegerResolution(_))
        ));
        assert!(matches!(
            build_grid(4, 0.125),
            Err(GeometryError::UnsupportedDimension(4))
        ));
        assert!(matches!(
            build_grid(2, 0.25),
            Err(GeometryError::ResolutionTooCoarse(4))
        ));
        assert!(build_grid(2, 0.1).is_ok());
    }

    #[test]
    fn classes_partition_nodes() {
        for (dim, n) in [(2, 16), (3, 8)] {
            let g = GridSpec::new(dim, 1.0 / n as f64).unwrap();
            let total: usize = [
                NodeClass::Interior,
                NodeClass::Sphere,
                NodeClass::ThinFree,
                NodeClass::ThinClamped,
            ]
            .iter()
            .map(|c| g.count(*c))
            .sum();
            assert_eq!(total, g.len());
            let thin = (0..g.len())
                .filter(|&id| g.index(id)[dim - 1] == 0 && g.class(id) != NodeClass::Sphere)
                .count();
            assert_eq!(g.count(NodeClass::ThinFree) + g.count(NodeClass::ThinClamped), thin);
            for id in 0..g.len() {
                let p = g.position(id);
                let idx = g.index(id);
                for a in 0..3 {
                    assert_eq!(p[a], idx[a] as f64 * g.h());
                }
                assert_eq!(g.node_at(idx), Some(id));
            }
        }
    }

    #[test]
    fn interpolation_reproduces_constants_and_linear_fields() {
        let g = grid2(16);
        let ones = ScalarField::from_fn(g.clone(), |_| 1.0);
        for p in [[0.3, 0.2, 0.0], [-0.71, -0.33, 0.0], [0.999, 0.0, 0.0]] {
            assert!((interpolate(&ones, &p).unwrap() - 1.0).abs() < 1e-14);
        }
        let lin = ScalarField::from_fn(g.clone(), |p| p[0]);
        assert!((interpolate(&lin, &[0.05, 0.05, 0.0]).unwrap() - 0.05).abs() < 1e-15);
        let f = ScalarField::from_fn(g, |p| p[0] * p[1] + 2.0 * p[0] - p[1]);
        let a = interpolate(&f, &[0.3, -0.2, 0.0]).unwrap();
        let b = interpolate(&f, &[0.3, 0.2, 0.0]).unwrap();
        assert_eq!(a, b);
        assert!((b - (0.06 + 0.6 - 0.2)).abs() < 1e-14);
        assert!(matches!(
            interpolate(&f, &[0.9, 0.9, 0.0]),
            Err(GeometryError::OutsideBall(_))
        ));
    }

    #[test]
    fn trilinear_interpolation_is_exact_in_three_dimensions() {
        let g = Arc::new(GridSpec::new(3, 0.125).unwrap());
        let f = ScalarField::from_fn(g, |p| 1.0 + p[0] - 2.0 * p[1] + 0.5 * p[2] + p[0] * p[1] * p[2]);
        let p = [0.11, -0.23, 0.31];
        let exact = 1.0 + p[0] - 2.0 * p[1] + 0.5 * p[2] + p[0] * p[1] * p[2];
        assert!((interpolate(&f, &p).unwrap() - exact).abs() < 1e-14);
    }

    #[test]
    fn gradient_of_linear_and_constant_fields() {
        let g = grid2(32);
        let lin = ScalarField::from_fn(g.clone(), |p| p[0]);
        let d = gradient(&lin, &[0.2, 0.3, 0.0]).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-12 && d[1].abs() < 1e-12);
        let c = ScalarField::from_fn(g.clone(), |_| 3.0);
        let d = gradient(&c, &[-0.4, 0.01, 0.0]).unwrap();
        assert!(d[0].abs() < 1e-12 && d[1].abs() < 1e-12);
        assert!(matches!(
            gradient(&c, &[0.97, 0.0, 0.0]),
            Err(GeometryError::NearBoundary { .. })
        ));
        // |x_n| kink: exact away from and next to the plane
        let kink = ScalarField::from_fn(g, |p| p[1].abs());
        for y in [0.3, 0.01, -0.01] {
            let d = gradient(&kink, &[0.1, y, 0.0]).unwrap();
            assert!((d[1] - y.signum()).abs() < 1e-12, "y={y} d={d:?}");
        }
        let d = gradient(&kink, &[0.1, 0.0, 0.0]).unwrap();
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn sphere_integral_of_one_is_the_measure() {
        let q = Quadrature::new(2, 1.0 / 64.0);
        let v = q.sphere_integral(|_| 1.0, &[0.0; 3], 0.5, None).unwrap();
        assert!((v - PI).abs() < 1e-10);
        let q3 = Quadrature::new(3, 1.0 / 16.0);
        let v = q3.sphere_integral(|_| 1.0, &[0.0; 3], 0.25, None).unwrap();
        assert!((v - 4.0 * PI * 0.0625).abs() < 1e-12);
        assert!(matches!(
            q.sphere_integral(|_| 1.0, &[0.6, 0.0, 0.0], 0.5, None),
            Err(GeometryError::NotContained { .. })
        ));
    }

    #[test]
    fn ball_integral_exact_on_constants() {
        let q = Quadrature::new(2, 1.0 / 64.0);
        let v = q.ball_integral(|_| 1.0, &[0.0; 3], 0.5, false).unwrap();
        assert!((v - PI * 0.25).abs() < 1e-12);
        assert_eq!(q.ball_integral(|_| 0.0, &[0.0; 3], 0.5, false).unwrap(), 0.0);
        let q3 = Quadrature::new(3, 1.0 / 16.0);
        let v = q3.ball_integral(|_| 1.0, &[0.1, 0.0, 0.0], 0.4, false).unwrap();
        let exact = 4.0 / 3.0 * PI * 0.4f64.powi(3);
        assert!(((v - exact) / exact).abs() < 1e-10);
        // int_{B_r} 1/|x| = 2 pi r^2
        let v = q3.ball_integral(|_| 1.0, &[0.0; 3], 0.4, true).unwrap();
        assert!(((v - 2.0 * PI * 0.16) / v).abs() < 1e-10);
    }

    #[test]
    fn ball_quadrature_converges_at_second_order() {
        // int_{B_r(c)} x_1^2 on the analytic integrand: refinement in h
        let c = [0.1, 0.0, 0.0];
        let r: f64 = 0.35;
        let exact = PI * r.powi(4) / 4.0 + c[0] * c[0] * PI * r * r;
        let errs: Vec<f64> = [8.0, 16.0, 32.0]
            .iter()
            .map(|n| {
                let q = Quadrature::new(2, 1.0 / n);
                let total = q.ball_integral(|p| p[0] * p[0], &c, r, false).unwrap();
                (total - exact).abs()
            })
            .collect();
        assert!(errs[0] / errs[1] >= 3.5, "{errs:?}");
        assert!(errs[1] / errs[2] >= 3.5, "{errs:?}");
    }

    #[test]
    fn weights_are_positive() {
        let s = SphereQuadrature::new(3, [0.0; 3], 0.3, 20);
        assert!(s.weights.iter().all(|w| *w > 0.0));
        let total: f64 = s.weights.iter().sum();
        assert!((total - sphere_measure(3, 0.3)).abs() < 1e-14);
    }
}
