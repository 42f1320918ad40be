//! End-to-end runs driven by config files: solve, analyze, write artifacts.

pub mod config;
pub mod fieldio;
pub mod output;
pub mod pipeline;
pub mod svg;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::field::ScalarField;
use crate::geometry::GeometryError;
use crate::solver::{minimize, SolveReport, SolverError};
use config::{ConfigError, RunConfig};
use fieldio::{dump_field, load_field_on, FieldIoError};
use output::{write_artifacts, OutputError};
use pipeline::{analyze, config_grid, RunSummary};

/// Shipped configs: name, description, text.
pub const PRESETS: &[(&str, &str, &str)] = &[
    ("const1", "constant datum 1, n=2, h=1/64", include_str!("../../presets/const1.cfg")),
    ("slit12", "1/2 slit trace, n=2, h=1/64", include_str!("../../presets/slit12.cfg")),
    ("slit32", "3/2 slit trace, n=2, h=1/64", include_str!("../../presets/slit32.cfg")),
    (
        "shifted32",
        "3/2 slit trace shifted to x1=0.3, n=2, h=1/64",
        include_str!("../../presets/shifted32.cfg"),
    ),
    ("slit52", "5/2 slit trace, n=2, h=1/64", include_str!("../../presets/slit52.cfg")),
    ("smoke3d", "1/2 slit trace, n=3, h=1/16", include_str!("../../presets/smoke3d.cfg")),
];

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("input field: {0}")]
    Input(#[from] FieldIoError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Output(#[from] OutputError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(SolverError::NotConverged { .. }) => EXIT_SOLVER,
            _ => EXIT_CONFIG,
        }
    }
}

/// Looks up a shipped preset by name, with or without `.cfg`.
pub fn preset(name: &str) -> Option<(&'static str, &'static str)> {
    let stem = name.strip_suffix(".cfg").unwrap_or(name);
    PRESETS.iter().find(|p| p.0 == stem).map(|p| (p.0, p.2))
}

/// Loads `arg` as a file, falling back to a shipped preset of that name.
pub fn load_config(arg: &Path) -> Result<RunConfig, CliError> {
    let mut config = if arg.exists() {
        RunConfig::load(arg)?
    } else if let Some((name, text)) = arg.to_str().and_then(preset) {
        RunConfig::parse(text, &format!("preset {name}"), name, Path::new(""))?
    } else {
        return Err(ConfigError::Io {
            path: arg.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or preset"),
        }
        .into());
    };
    config.apply_env();
    Ok(config)
}

#[derive(Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.summary.passed() {
            EXIT_PASS
        } else {
            EXIT_VERDICT
        }
    }
}

fn finish(config: &RunConfig, field: &ScalarField, solve: Option<SolveReport>, mode: &'static str) -> Result<RunOutcome, CliError> {
    let analysis = analyze(field, config, solve, mode);
    let (files, warnings) = write_artifacts(&config.output_dir, field, &analysis)?;
    Ok(RunOutcome {
        summary: analysis.summary,
        output_dir: config.output_dir.clone(),
        files,
        warnings,
    })
}

/// Solves the configured scenario and runs the analyses.
///
/// A solver that does not converge still leaves its last iterate in
/// `field.txt` of the output directory.
pub fn run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let grid = config_grid(config)?;
    match minimize(&grid, &config.scenario, &config.solver) {
        Ok((field, report)) => finish(config, &field, Some(report), "run"),
        Err(SolverError::NotConverged { report, field }) => {
            let _ = std::fs::create_dir_all(&config.output_dir);
            let _ = dump_field(&field, &config.output_dir.join("field.txt"));
            Err(SolverError::NotConverged { report, field }.into())
        }
        Err(e) => Err(e.into()),
    }
}

/// Runs the analyses on the field named by `input.field`.
pub fn verify(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let path = config
        .input_field
        .as_ref()
        .ok_or_else(|| CliError::Usage("verify needs `field` in the [input] section".into()))?;
    let grid = config_grid(config)?;
    let field = load_field_on(path, &grid)?;
    finish(config, &field, None, "verify")
}
