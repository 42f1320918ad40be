//! Artifact files of a run.
//!
//! | file | content |
//! |---|---|
//! | `field.txt` | field dump |
//! | `frequency_<k>.csv` | profile about the `k`-th frequency center |
//! | `frequency_centers.csv` | index of the frequency centers |
//! | `blowup.csv` | homogeneity estimates |
//! | `classification.csv` | classified free boundary points |
//! | `fixed_boundary.csv` | contact flags on the fixed boundary |
//! | `decay.csv` | decay fits, one row per radius |
//! | `thin_profile.csv` | thin-set values with their `LAMBDA`/`OMEGA`/`GAMMA` label |
//! | `solve.csv` | solve report and invariant checks as key/value pairs |
//! | `summary.json` | everything above condensed, plus verdicts |
//! | `frequency.svg`, `thin_profile.svg` | plots |

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::fieldio::{dump_field, FieldIoError};
use super::pipeline::{fixed_boundary_flags, thin_label, Analysis};
use super::svg::{render, Marker, Plot, Series};
use crate::field::ScalarField;
use crate::geometry::NodeClass;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot create {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Field(#[from] FieldIoError),
}

fn io_err(path: &Path, e: impl ToString) -> OutputError {
    OutputError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Shortest round-trip decimal, scientific outside `[1e-4, 1e7)`.
fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e7).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

struct Table {
    path: PathBuf,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(dir: &Path, name: &str, header: &[&str]) -> Result<Self, OutputError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Table {
            path: dir.join(name),
            writer,
        })
    }

    fn row(&mut self, cells: &[String]) -> Result<(), OutputError> {
        self.writer.write_record(cells)?;
        Ok(())
    }

    fn finish(self, written: &mut Vec<PathBuf>) -> Result<(), OutputError> {
        let bytes = self.writer.into_inner().map_err(|e| io_err(&self.path, e))?;
        fs::write(&self.path, bytes).map_err(|e| io_err(&self.path, e))?;
        written.push(self.path);
        Ok(())
    }
}

/// Writes every data artifact. Plot failures are reported in the returned
/// warnings and never abort the write.
pub fn write_artifacts(dir: &Path, field: &ScalarField, analysis: &Analysis) -> Result<(Vec<PathBuf>, Vec<String>), OutputError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    let summary = &analysis.summary;
    let grid = field.grid();

    let path = dir.join("field.txt");
    dump_field(field, &path)?;
    written.push(path);

    let mut centers = Table::new(dir, "frequency_centers.csv", &["k", "x1", "x2", "error"])?;
    for (k, f) in summary.frequency.iter().enumerate() {
        centers.row(&[k.to_string(), num(f.center[0]), num(second(f.center, grid.dim())), f.error.clone().unwrap_or_default()])?;
        let mut t = Table::new(
            dir,
            &format!("frequency_{k}.csv"),
            &["r", "D", "H", "N", "phi", "res_id1", "res_id2", "rellich_slack", "rellich_lhs"],
        )?;
        if let Some(p) = &f.profile {
            for row in &p.rows {
                t.row(&[
                    num(row.r),
                    num(row.d),
                    num(row.h),
                    num(row.n),
                    num(row.phi),
                    num(row.res_id1),
                    num(row.res_id2),
                    num(row.rellich_slack),
                    num(row.rellich_lhs),
                ])?;
            }
        }
        t.finish(&mut written)?;
    }
    centers.finish(&mut written)?;

    let mut t = Table::new(
        dir,
        "blowup.csv",
        &[
            "x1",
            "x2",
            "kappa_hat",
            "fit_residual",
            "window_lo",
            "window_hi",
            "log_slope_kappa",
            "log_slope_residual",
            "low_confidence",
            "n_at_max",
            "error",
        ],
    )?;
    for b in &summary.blowup {
        let e = b.estimate.as_ref();
        t.row(&[
            num(b.point[0]),
            num(second(b.point, grid.dim())),
            opt(e.map(|e| e.kappa_hat)),
            opt(e.map(|e| e.fit_residual)),
            opt(e.map(|e| e.window.0)),
            opt(e.map(|e| e.window.1)),
            opt(e.map(|e| e.log_slope_kappa)),
            opt(e.map(|e| e.log_slope_residual)),
            e.map(|e| e.low_confidence.to_string()).unwrap_or_default(),
            opt(e.map(|e| e.n_at_max)),
            b.error.clone().unwrap_or_default(),
        ])?;
    }
    t.finish(&mut written)?;

    if let Some(points) = &summary.classification {
        let mut t = Table::new(
            dir,
            "classification.csv",
            &[
                "node",
                "x1",
                "x2",
                "class",
                "kappa_hat",
                "log_slope_kappa",
                "low_confidence",
                "verdict",
                "margin",
                "nearest",
                "note",
            ],
        )?;
        for p in points {
            let e = p.estimate.as_ref();
            t.row(&[
                p.node.to_string(),
                num(p.location[0]),
                num(second(p.location, grid.dim())),
                p.class.to_string(),
                opt(e.map(|e| e.kappa_hat)),
                opt(e.map(|e| e.log_slope_kappa)),
                e.map(|e| e.low_confidence.to_string()).unwrap_or_default(),
                p.verdict.to_string(),
                opt(p.admissibility.map(|a| a.margin)),
                opt(p.admissibility.and_then(|a| a.nearest)),
                p.note.clone().unwrap_or_default(),
            ])?;
        }
        t.finish(&mut written)?;
    }

    let mut t = Table::new(dir, "fixed_boundary.csv", &["node", "x1", "x2", "flag"])?;
    for (id, flag) in fixed_boundary_flags(&analysis.decomposition) {
        let p = grid.position(id);
        t.row(&[id.to_string(), num(p[0]), num(second(p, grid.dim())), flag.to_string()])?;
    }
    t.finish(&mut written)?;

    let mut t = Table::new(dir, "decay.csv", &["x1", "x2", "r", "sup", "alpha", "residual", "error"])?;
    for d in &summary.regularity {
        match &d.fit {
            Some(fit) => {
                for (r, s) in fit.radii.iter().zip(&fit.sups) {
                    t.row(&[
                        num(d.center[0]),
                        num(second(d.center, grid.dim())),
                        num(*r),
                        num(*s),
                        num(fit.alpha),
                        num(fit.residual),
                        String::new(),
                    ])?;
                }
            }
            None => t.row(&[
                num(d.center[0]),
                num(second(d.center, grid.dim())),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                d.error.clone().unwrap_or_default(),
            ])?,
        }
    }
    t.finish(&mut written)?;

    let mut thin: Vec<usize> = (0..grid.len()).filter(|&id| grid.class(id).is_thin()).collect();
    thin.sort_by(|&a, &b| {
        let (p, q) = (grid.position(a), grid.position(b));
        (p[1], p[0]).partial_cmp(&(q[1], q[0])).expect("finite positions")
    });
    let mut t = Table::new(dir, "thin_profile.csv", &["x1", "x2", "u", "set", "clamped"])?;
    for &id in &thin {
        let p = grid.position(id);
        t.row(&[
            num(p[0]),
            num(second(p, grid.dim())),
            num(field.value(id)),
            thin_label(&analysis.decomposition, id).to_string(),
            (grid.class(id) == NodeClass::ThinClamped).to_string(),
        ])?;
    }
    t.finish(&mut written)?;

    let mut t = Table::new(dir, "solve.csv", &["key", "value"])?;
    let mut kv = Vec::new();
    if let Some(s) = &summary.solve {
        kv.push(("iterations", s.iterations.to_string()));
        kv.push(("final_update", num(s.final_update)));
        kv.push(("energy", num(s.energy)));
        kv.push(("complementarity_negativity", num(s.complementarity.negativity)));
        kv.push(("complementarity_detached_flux", num(s.complementarity.detached_flux)));
        kv.push(("complementarity_product", num(s.complementarity.product)));
    }
    let inv = &summary.invariants;
    kv.push(("subharmonicity_positive", num(inv.subharmonicity_positive)));
    kv.push(("subharmonicity_negative", num(inv.subharmonicity_negative)));
    if let Some(m) = inv.minimality {
        kv.push(("perturbation_trials", m.trials.to_string()));
        kv.push(("perturbation_step", num(m.step)));
        kv.push(("perturbation_worst_decrease", num(m.worst_decrease)));
    }
    let ts = &summary.thin_set;
    kv.push(("tau_contact", num(ts.tau_contact)));
    kv.push(("rho_near", num(ts.rho_near)));
    for (k, v) in kv {
        t.row(&[k.to_string(), v])?;
    }
    t.finish(&mut written)?;

    let path = dir.join("summary.json");
    let mut json = serde_json::to_string_pretty(summary)?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| io_err(&path, e))?;
    written.push(path);

    let mut warnings = Vec::new();
    for (name, plot) in [
        ("frequency.svg", frequency_plot(analysis)),
        ("thin_profile.svg", thin_plot(field, analysis)),
    ] {
        let path = dir.join(name);
        match render(&plot) {
            None => warnings.push(format!("{name}: nothing to plot")),
            Some(svg) => match fs::write(&path, svg) {
                Ok(()) => written.push(path),
                Err(e) => warnings.push(format!("{name}: {e}")),
            },
        }
    }
    Ok((written, warnings))
}

fn second(p: [f64; 3], dim: usize) -> f64 {
    if dim == 3 {
        p[1]
    } else {
        0.0
    }
}

fn frequency_plot(analysis: &Analysis) -> Plot {
    let series = analysis
        .summary
        .frequency
        .iter()
        .filter_map(|f| {
            f.profile.as_ref().map(|p| Series {
                label: format!("x1 = {}", f.center[0]),
                points: p.rows.iter().map(|r| (r.r, r.n)).collect(),
                marker: None,
            })
        })
        .collect();
    Plot {
        title: format!("frequency, {}", analysis.summary.scenario.name),
        x_label: "r".into(),
        y_label: "N(r)".into(),
        series,
    }
}

fn thin_plot(field: &ScalarField, analysis: &Analysis) -> Plot {
    let grid = field.grid();
    let mut line: Vec<usize> = (0..grid.len())
        .filter(|&id| grid.class(id).is_thin() && grid.index(id)[1] == 0)
        .collect();
    if grid.dim() == 2 {
        line = (0..grid.len()).filter(|&id| grid.class(id).is_thin()).collect();
    }
    line.sort_by_key(|&id| grid.index(id)[0]);
    let pick = |label: &str| -> Vec<(f64, f64)> {
        line.iter()
            .filter(|&&id| thin_label(&analysis.decomposition, id) == label)
            .map(|&id| (grid.position(id)[0], field.value(id)))
            .collect()
    };
    Plot {
        title: "thin set profile u(x1, 0)".into(),
        x_label: "x1".into(),
        y_label: "u".into(),
        series: vec![
            Series {
                label: "u".into(),
                points: line.iter().map(|&id| (grid.position(id)[0], field.value(id))).collect(),
                marker: None,
            },
            Series {
                label: "coincidence".into(),
                points: pick("LAMBDA"),
                marker: Some(Marker::Square),
            },
            Series {
                label: "positivity".into(),
                points: pick("OMEGA"),
                marker: Some(Marker::Circle),
            },
            Series {
                label: "free boundary".into(),
                points: pick("GAMMA"),
                marker: Some(Marker::Triangle),
            },
        ],
    }
}
