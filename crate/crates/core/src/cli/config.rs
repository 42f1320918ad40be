//! Run configuration: a flat TOML document with one table per section.
//!
//! ```toml
//! [grid]
//! dimension = 2
//! h = "1/64"            # or a number such as 0.015625
//!
//! [scenario]
//! datum = "slit_trace"  # constant | slit_trace | shifted_slit | table
//! kappa = 0.5
//! amplitude = 1.0
//!
//! [frequency]
//! centers = [0.0, 0.1]
//! ```
//!
//! Every key is optional except `grid.dimension`, `grid.h` and
//! `scenario.datum`. Validation errors carry the line of the offending key.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use crate::analytic::{BoundaryTable, Datum, Scenario};
use crate::geometry::{norm, resolution_from_spacing, thin_point, Point};
use crate::solver::SolverParams;

/// Shipped verdict tolerances, settled by a refinement study.
pub const CALIBRATION: &str = include_str!("../../presets/calibration.toml");

/// Environment variable overriding `output.directory`.
pub const OUTPUT_DIR_ENV: &str = "SIGNORINI_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}:{line}: {message}")]
    Invalid {
        origin: String,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Largest allowed drop of `N` between consecutive radii.
    pub monotonicity: f64,
    /// Bound on both relative identity residuals.
    pub identity: f64,
    /// Identities and the Rellich inequality are judged at radii of at least
    /// this many grid cells.
    pub identity_min_cells: f64,
    /// Allowed negative Rellich slack as a fraction of its left-hand side.
    pub rellich: f64,
    /// Lower bound on decay exponents at clamped centers.
    pub decay_floor: f64,
    pub admissibility: f64,
    /// Allowed energy decrease under admissible perturbations.
    pub minimality: f64,
    /// Multiple of the solver tolerance allowed for subharmonicity defects.
    pub subharmonicity_factor: f64,
}

impl Tolerances {
    pub fn identity_floor(&self, h: f64) -> f64 {
        self.identity_min_cells * h
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        toml::from_str(CALIBRATION).expect("shipped calibration parses")
    }
}

/// Radii of a frequency profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiiSpec {
    /// `4h` to `(1 - |c|) / 2` in steps of `h`.
    Default,
    Range { lo: f64, hi: f64, step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Label used for the default output directory.
    pub name: String,
    pub dimension: usize,
    pub h: f64,
    pub scenario: Scenario,
    pub solver: SolverParams,
    pub frequency_centers: Vec<Point>,
    pub frequency_radii: RadiiSpec,
    pub blowup_points: Vec<Point>,
    pub classification: bool,
    pub regularity_centers: Vec<Point>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub perturbations: usize,
    pub input_field: Option<PathBuf>,
    pub tolerances: Tolerances,
}

impl RunConfig {
    /// Reads and validates a config file. Relative paths inside it resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::parse(&text, &path.display().to_string(), &name, &base)
    }

    /// Parses config text. `origin` labels error messages.
    pub fn parse(text: &str, origin: &str, name: &str, base: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        Validator { text, origin }.build(raw, name, base)
    }

    /// Applies the output directory override from the environment.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                self.output_dir = PathBuf::from(dir);
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Spacing {
    Number(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: RawGrid,
    scenario: RawScenario,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    frequency: RawFrequency,
    #[serde(default)]
    blowup: RawPoints,
    #[serde(default)]
    classification: RawClassification,
    #[serde(default)]
    regularity: RawPoints,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    input: RawInput,
    #[serde(default)]
    tolerances: toml::Table,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dimension: Spanned<i64>,
    h: Spanned<Spacing>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    datum: Spanned<String>,
    kappa: Option<f64>,
    value: Option<f64>,
    offset: Option<f64>,
    amplitude: Option<Spanned<f64>>,
    table: Option<Spanned<String>>,
    table_polar: Option<usize>,
    table_azimuth: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    omega: Option<f64>,
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrequency {
    centers: Option<Spanned<Vec<f64>>>,
    centers_x2: Option<Spanned<Vec<f64>>>,
    r_min: Option<Spanned<f64>>,
    r_max: Option<f64>,
    step: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoints {
    #[serde(alias = "centers")]
    points: Option<Spanned<Vec<f64>>>,
    #[serde(alias = "centers_x2")]
    points_x2: Option<Spanned<Vec<f64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClassification {
    enabled: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<String>,
    seed: Option<u64>,
    perturbations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    field: Option<String>,
}

struct Validator<'a> {
    text: &'a str,
    origin: &'a str,
}

impl Validator<'_> {
    fn err(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        let line = self.text[..span.start.min(self.text.len())].matches('\n').count() + 1;
        ConfigError::Invalid {
            origin: self.origin.to_string(),
            line,
            message: message.into(),
        }
    }

    fn section_err(&self, section: &str, message: impl Into<String>) -> ConfigError {
        let header = format!("[{section}]");
        let start = self.text.find(&header).unwrap_or(0);
        self.err(start..start, message)
    }

    fn build(&self, raw: RawConfig, name: &str, base: &Path) -> Result<RunConfig, ConfigError> {
        let dim_span = raw.grid.dimension.span();
        let dimension = match *raw.grid.dimension.get_ref() {
            2 => 2usize,
            3 => 3,
            d => return Err(self.err(dim_span, format!("dimension must be 2 or 3, got {d}"))),
        };
        let h_span = raw.grid.h.span();
        let h = match raw.grid.h.get_ref() {
            Spacing::Number(v) => *v,
            Spacing::Text(s) => parse_fraction(s)
                .ok_or_else(|| self.err(h_span.clone(), format!("cannot read h = {s:?}; use a number or \"1/N\"")))?,
        };
        let resolution = resolution_from_spacing(h).map_err(|e| self.err(h_span.clone(), format!("h = {h}: {e}")))?;
        let h = 1.0 / resolution as f64;

        let scenario = self.scenario(raw.scenario, dimension, base)?;

        let defaults = SolverParams::default();
        let solver = SolverParams {
            omega: raw.solver.omega.unwrap_or(defaults.omega),
            tolerance: raw.solver.tolerance.unwrap_or(defaults.tolerance),
            max_iterations: raw.solver.max_iterations.unwrap_or(defaults.max_iterations),
        };
        solver
            .validate()
            .map_err(|e| self.section_err("solver", e.to_string()))?;

        let frequency_centers = self.points(raw.frequency.centers, raw.frequency.centers_x2, dimension, "frequency")?;
        for c in &frequency_centers {
            if c[0] < 0.0 {
                return Err(self.section_err(
                    "frequency",
                    format!("frequency center x_1 = {} lies on the clamped set", c[0]),
                ));
            }
            if norm(c) > 1.0 - 8.0 * h {
                return Err(self.section_err("frequency", format!("center {c:?} is too close to the sphere")));
            }
        }
        let frequency_radii = match raw.frequency.r_min {
            None => RadiiSpec::Default,
            Some(lo) => {
                let span = lo.span();
                let lo = *lo.get_ref();
                let hi = raw.frequency.r_max.unwrap_or(0.5);
                let step = raw.frequency.step.unwrap_or(h);
                if !(lo > 0.0 && hi > lo && step > 0.0) {
                    return Err(self.err(span, format!("radii need 0 < r_min < r_max and step > 0 (r_min {lo}, r_max {hi}, step {step})")));
                }
                RadiiSpec::Range { lo, hi, step }
            }
        };

        let blowup_points = self.points(raw.blowup.points, raw.blowup.points_x2, dimension, "blowup")?;
        for p in &blowup_points {
            if norm(p) > 0.6 {
                return Err(self.section_err("blowup", format!("blowup point {p:?} is farther than 0.6 from the origin")));
            }
        }
        let regularity_centers = self.points(raw.regularity.points, raw.regularity.points_x2, dimension, "regularity")?;
        for c in &regularity_centers {
            if norm(c) > 0.6 + 1e-12 {
                return Err(self.section_err(
                    "regularity",
                    format!("center {c:?} leaves no room for the decay radii up to 0.4"),
                ));
            }
        }

        let mut tolerances_table = toml::Table::new();
        let calibration: toml::Table = toml::from_str(CALIBRATION).expect("shipped calibration parses");
        tolerances_table.extend(calibration);
        tolerances_table.extend(raw.tolerances);
        let tolerances: Tolerances = tolerances_table
            .try_into()
            .map_err(|e: toml::de::Error| self.section_err("tolerances", e.to_string().trim_end().to_string()))?;

        Ok(RunConfig {
            name: name.to_string(),
            dimension,
            h,
            scenario,
            solver,
            frequency_centers,
            frequency_radii,
            blowup_points,
            classification: raw.classification.enabled.unwrap_or(false),
            regularity_centers,
            output_dir: raw
                .output
                .directory
                .map(PathBuf::from)
                .unwrap_or_else(|| Path::new("output").join(name)),
            seed: raw.output.seed.unwrap_or(0),
            perturbations: raw.output.perturbations.unwrap_or(20),
            input_field: raw.input.field.map(|f| base.join(f)),
            tolerances,
        })
    }

    fn scenario(&self, raw: RawScenario, dimension: usize, base: &Path) -> Result<Scenario, ConfigError> {
        let span = raw.datum.span();
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| self.err(span.clone(), format!("datum {:?} needs `{key}`", raw.datum.get_ref())))
        };
        let datum = match raw.datum.get_ref().as_str() {
            "constant" => Datum::Constant {
                value: need(raw.value, "value")?,
            },
            "slit_trace" => Datum::SlitTrace {
                kappa: need(raw.kappa, "kappa")?,
            },
            "shifted_slit" => Datum::ShiftedSlit {
                kappa: need(raw.kappa, "kappa")?,
                offset: need(raw.offset, "offset")?,
            },
            "table" => {
                let file = raw
                    .table
                    .as_ref()
                    .ok_or_else(|| self.err(span.clone(), "datum \"table\" needs `table`"))?;
                let path = base.join(file.get_ref());
                let values = read_table(&path).map_err(|m| self.err(file.span(), m))?;
                let table = if dimension == 2 {
                    BoundaryTable::arc(values)
                } else {
                    let polar = raw.table_polar.unwrap_or(0);
                    let azimuth = raw.table_azimuth.unwrap_or(0);
                    BoundaryTable::hemisphere(polar, azimuth, values)
                }
                .map_err(|e| self.err(file.span(), e.to_string()))?;
                Datum::Table(table)
            }
            other => {
                return Err(self.err(
                    span,
                    format!("unknown datum {other:?}; expected constant, slit_trace, shifted_slit or table"),
                ))
            }
        };
        let label = raw.name.unwrap_or_else(|| match &datum {
            Datum::Constant { value } => format!("constant({value})"),
            Datum::SlitTrace { kappa } => format!("slit_trace({kappa})"),
            Datum::ShiftedSlit { kappa, offset } => format!("shifted_slit({kappa}, {offset})"),
            Datum::Table(_) => "table".into(),
        });
        let mut scenario = Scenario::new(label, datum, dimension).map_err(|e| self.err(span.clone(), e.to_string()))?;
        if let Some(a) = raw.amplitude {
            let amp = *a.get_ref();
            if !(amp > 0.0 && amp.is_finite()) {
                return Err(self.err(a.span(), format!("amplitude must be positive, got {amp}")));
            }
            scenario = scenario.with_amplitude(amp);
        }
        scenario.check_admissible().map_err(|e| self.err(span, e.to_string()))?;
        Ok(scenario)
    }

    fn points(
        &self,
        x1: Option<Spanned<Vec<f64>>>,
        x2: Option<Spanned<Vec<f64>>>,
        dim: usize,
        section: &str,
    ) -> Result<Vec<Point>, ConfigError> {
        let Some(x1) = x1 else {
            if let Some(x2) = x2 {
                return Err(self.err(x2.span(), "second coordinates given without first coordinates"));
            }
            return Ok(Vec::new());
        };
        let span = x1.span();
        let x1 = x1.into_inner();
        let x2 = match x2 {
            None => vec![0.0; x1.len()],
            Some(x2) if dim == 2 => return Err(self.err(x2.span(), "second coordinates need dimension 3")),
            Some(x2) if x2.get_ref().len() != x1.len() => {
                return Err(self.err(x2.span(), format!("expected {} second coordinates", x1.len())))
            }
            Some(x2) => x2.into_inner(),
        };
        let pts: Vec<Point> = x1.iter().zip(&x2).map(|(&a, &b)| thin_point(dim, a, b)).collect();
        for p in &pts {
            if !p.iter().all(|v| v.is_finite()) || norm(p) >= 1.0 {
                return Err(self.err(span.clone(), format!("[{section}] point {p:?} is outside the unit ball")));
            }
        }
        Ok(pts)
    }
}

fn parse_fraction(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().ok()?;
            let b: f64 = b.trim().parse().ok()?;
            Some(a / b)
        }
        None => s.parse().ok(),
    }
}

/// Whitespace separated numbers; `#` starts a comment.
fn read_table(path: &Path) -> Result<Vec<f64>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read table {}: {e}", path.display()))?;
    let mut values = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| format!("{}:{}: bad number {tok:?}", path.display(), n + 1))?;
            values.push(v);
        }
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::parse(text, "test.cfg", "test", Path::new(""))
    }

    const MINIMAL: &str = "[grid]\ndimension = 2\nh = \"1/32\"\n\n[scenario]\ndatum = \"constant\"\nvalue = 1.0\n";

    #[test]
    fn minimal_config() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.h, 1.0 / 32.0);
        assert_eq!(c.scenario.datum, Datum::Constant { value: 1.0 });
        assert_eq!(c.output_dir, Path::new("output/test"));
        assert_eq!(c.tolerances, Tolerances::default());
        assert!(!c.classification);
    }

    #[test]
    fn coarse_spacing_reports_its_line() {
        let text = MINIMAL.replace("h = \"1/32\"", "h = 0.3");
        match parse(&text) {
            Err(ConfigError::Invalid { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse("[grid]\ndimension = = 2\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn unknown_keys_and_datums_are_rejected() {
        assert!(parse(&format!("{MINIMAL}colour = 1\n")).is_err());
        let text = MINIMAL.replace("\"constant\"", "\"parabola\"");
        assert!(matches!(parse(&text), Err(ConfigError::Invalid { line: 6, .. })));
    }

    #[test]
    fn clamped_frequency_centers_are_rejected() {
        let text = format!("{MINIMAL}\n[frequency]\ncenters = [0.0, -0.2]\n");
        assert!(matches!(parse(&text), Err(ConfigError::Invalid { line: 9, .. })));
    }

    #[test]
    fn tolerance_overrides_merge_with_calibration() {
        let text = format!("{MINIMAL}\n[tolerances]\nmonotonicity = 0.01\n");
        let c = parse(&text).unwrap();
        assert_eq!(c.tolerances.monotonicity, 0.01);
        assert_eq!(c.tolerances.decay_floor, Tolerances::default().decay_floor);
    }
}
