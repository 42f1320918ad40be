//! Numerical laboratory for the thin obstacle problem with a clamped fixed
//! boundary.

pub mod analytic;
pub mod blowup;
pub mod cli;
pub mod field;
pub mod fit;
pub mod freeboundary;
pub mod frequency;
pub mod geometry;
pub mod regularity;
pub mod solver;
