//! Text dumps of grid fields.
//!
//! ```text
//! dimension 2
//! h 1/64
//! nodes 6529
//! 0.0000000000000000e0
//! ...
//! ```
//!
//! One value per line in node index order, 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::field::{FieldError, ScalarField};
use crate::geometry::{GeometryError, GridSpec};

#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Header { line: usize, message: String },
    #[error("header says {expected} but the grid expects {actual}")]
    Mismatch { expected: String, actual: String },
    #[error("truncated field: header promises {expected} values, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{found} values after the header, expected {expected}")]
    TrailingValues { expected: usize, found: usize },
    #[error("line {line}: bad value {token:?}")]
    BadValue { line: usize, token: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Serializes a field to the dump format.
pub fn format_field(field: &ScalarField) -> String {
    let grid = field.grid();
    let mut out = String::with_capacity(24 * (grid.len() + 3));
    let _ = writeln!(out, "dimension {}", grid.dim());
    let _ = writeln!(out, "h 1/{}", grid.resolution());
    let _ = writeln!(out, "nodes {}", grid.len());
    for v in field.values() {
        let _ = writeln!(out, "{v:.16e}");
    }
    out
}

pub fn dump_field(field: &ScalarField, path: &Path) -> Result<(), FieldIoError> {
    fs::write(path, format_field(field)).map_err(|e| FieldIoError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Loads a dump, building the grid its header describes.
pub fn load_field(path: &Path) -> Result<ScalarField, FieldIoError> {
    let text = fs::read_to_string(path).map_err(|e| FieldIoError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_field(&text, None)
}

/// Loads a dump and requires its header to match `grid`.
pub fn load_field_on(path: &Path, grid: &Arc<GridSpec>) -> Result<ScalarField, FieldIoError> {
    let text = fs::read_to_string(path).map_err(|e| FieldIoError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_field(&text, Some(grid))
}

fn header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<(usize, &'a str), FieldIoError> {
    let (n, line) = lines.next().ok_or(FieldIoError::Header {
        line: 0,
        message: format!("missing `{key}` header"),
    })?;
    let rest = line
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| FieldIoError::Header {
            line: n + 1,
            message: format!("expected `{key} ...`, found {line:?}"),
        })?;
    Ok((n + 1, rest.trim()))
}

/// Parses dump text; with `expected` the header must describe that grid.
pub fn parse_field(text: &str, expected: Option<&Arc<GridSpec>>) -> Result<ScalarField, FieldIoError> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, what: &str| FieldIoError::Header {
        line,
        message: format!("cannot read {what}"),
    };
    let (l, dim) = header(&mut lines, "dimension")?;
    let dim: usize = dim.parse().map_err(|_| bad(l, "dimension"))?;
    let (l, h) = header(&mut lines, "h")?;
    let resolution: usize = h
        .strip_prefix("1/")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad(l, "h"))?;
    let (l, count) = header(&mut lines, "nodes")?;
    let count: usize = count.parse().map_err(|_| bad(l, "node count"))?;

    let grid = match expected {
        Some(g) => {
            if g.dim() != dim || g.resolution() != resolution {
                return Err(FieldIoError::Mismatch {
                    expected: format!("dimension {dim}, h 1/{resolution}"),
                    actual: format!("dimension {}, h 1/{}", g.dim(), g.resolution()),
                });
            }
            g.clone()
        }
        None => Arc::new(GridSpec::new(dim, 1.0 / resolution as f64)?),
    };
    if grid.len() != count {
        return Err(FieldIoError::Mismatch {
            expected: format!("{count} nodes"),
            actual: format!("{} nodes", grid.len()),
        });
    }
    let mut values = Vec::with_capacity(count);
    for (n, line) in lines {
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        let v: f64 = tok.parse().map_err(|_| FieldIoError::BadValue {
            line: n + 1,
            token: tok.to_string(),
        })?;
        values.push(v);
    }
    if values.len() < count {
        return Err(FieldIoError::Truncated {
            expected: count,
            found: values.len(),
        });
    }
    if values.len() > count {
        return Err(FieldIoError::TrailingValues {
            expected: count,
            found: values.len(),
        });
    }
    Ok(ScalarField::from_values(grid, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grid;

    fn grid(dim: usize, n: usize) -> Arc<GridSpec> {
        Arc::new(build_grid(dim, 1.0 / n as f64).unwrap())
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let g = grid(2, 16);
        let u = ScalarField::from_fn(g.clone(), |p| (p[0] * 7.3).sin() / 3.0 + p[1] * 1e-300 - 0.0);
        let back = parse_field(&format_field(&u), Some(&g)).unwrap();
        for (a, b) in u.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let fresh = parse_field(&format_field(&u), None).unwrap();
        assert_eq!(fresh.grid().len(), g.len());
    }

    #[test]
    fn zero_field_loads() {
        let g = grid(3, 8);
        let u = parse_field(&format_field(&ScalarField::zeros(g)), None).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn header_mismatch_and_truncation() {
        let text = format_field(&ScalarField::zeros(grid(2, 16)));
        assert!(matches!(
            parse_field(&text, Some(&grid(3, 16))),
            Err(FieldIoError::Mismatch { .. })
        ));
        assert!(matches!(
            parse_field(&text.replacen("dimension 2", "dimension 3", 1), None),
            Err(FieldIoError::Mismatch { .. })
        ));
        let cut: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_field(&cut, None), Err(FieldIoError::Truncated { .. })));
        assert!(matches!(
            parse_field("dimension two\n", None),
            Err(FieldIoError::Header { line: 1, .. })
        ));
    }
}
