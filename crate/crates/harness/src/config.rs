//! Experiment configuration: a versioned JSON document.
//!
//! Unknown keys are rejected everywhere. Parse errors carry the JSON path
//! of the offending field and its line and column.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub problem: ProblemConfig,
    pub reference: ReferenceConfig,
    pub dataset: DatasetConfig,
    pub lambdas: LambdaGrid,
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default)]
    pub c_values: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma_grid: GammaGridConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub certified_popoviciu: bool,
    #[serde(default)]
    pub monte_carlo_samples: Option<usize>,
    #[serde(default = "default_lambda_tol")]
    pub lambda_tol: f64,
    #[serde(default = "default_constraint_tol")]
    pub constraint_tol: f64,
    /// Alternative measures `P` for sensitivity runs.
    #[serde(default)]
    pub deviations: Option<Vec<DeviationConfig>>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_lambda_tol() -> f64 {
    1e-4
}

fn default_constraint_tol() -> f64 {
    ermrer::sensitivity::CONSTRAINT_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Risks are given per atom in the dataset section.
    Table,
    LinearSquared,
    #[serde(rename = "threshold-01")]
    Threshold01,
    #[serde(rename = "linear-01")]
    Linear01,
    Composite { predictor: PredictorName, loss: LossName },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorName {
    Linear,
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossName {
    Squared,
    Absolute,
    ZeroOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKindName {
    Probability,
    Counting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceConfig {
    /// Explicit atom list.
    Atoms {
        measure: MeasureKindName,
        atoms: Vec<AtomConfig>,
    },
    /// Atoms at locations `0, 1, …, n-1` on the line.
    Indexed {
        measure: MeasureKindName,
        masses: Vec<f64>,
    },
    /// Midpoint quadrature of a named density on a box: `"uniform"`,
    /// `"gaussian(mu,sigma)"` or `"linear"`.
    Density {
        density: String,
        lower: Vec<f64>,
        upper: Vec<f64>,
        cells: Vec<usize>,
        #[serde(default)]
        budget: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub location: Vec<f64>,
    pub mass: f64,
}

/// Exactly one source of data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Inline(Vec<PointConfig>),
    /// Path to a CSV file with header `x_0,…,x_{d-1},y`, relative to the
    /// config file.
    Csv(PathBuf),
    Distribution(DistributionConfig),
    /// One risk vector per dataset, for the `table` problem.
    RiskTables(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionConfig {
    pub support: Vec<SupportConfig>,
    pub n: usize,
    #[serde(default)]
    pub enumeration_budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportConfig {
    pub x: Vec<f64>,
    pub y: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaGrid {
    List(Vec<f64>),
    LogRange { log_range: LogRange },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            LambdaGrid::List(v) => v.clone(),
            LambdaGrid::LogRange { log_range: r } => {
                if r.count == 1 {
                    return vec![r.min];
                }
                let (a, b) = (r.min.ln(), r.max.ln());
                (0..r.count)
                    .map(|i| (a + (b - a) * i as f64 / (r.count - 1) as f64).exp())
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaGridConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for GammaGridConfig {
    fn default() -> Self {
        let g = ermrer::GammaGrid::default();
        Self {
            min: g.min,
            max: g.max,
            count: g.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeviationConfig {
    /// The reference measure, normalized.
    Reference,
    /// Equal weight on every atom of positive reference mass.
    Uniform,
    PointMass { atom: usize },
    Weights { weights: Vec<f64> },
    /// `count` flat Dirichlet draws on the atoms of positive mass; needs a
    /// seed.
    Dirichlet { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Checks to run; all when absent.
    #[serde(default)]
    pub checks: Option<Vec<String>>,
    /// Random instances per corpus check.
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Replace the variance constant in the sensitivity check, e.g. by 0 as
    /// a negative control.
    #[serde(default)]
    pub force_b_squared: Option<f64>,
}

fn default_instances() -> usize {
    200
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            checks: None,
            instances: default_instances(),
            force_b_squared: None,
        }
    }
}

/// A semantic validation problem, reported with the field it concerns.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn field_error(field: &str, message: impl Into<String>) -> FieldError {
    FieldError {
        field: field.to_string(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config = Self::parse(text)?;
        config.check()?;
        Ok(config)
    }

    /// Parses without semantic validation, so that command-line overrides
    /// can be applied first.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            HarnessError::Config(format!(
                "{} (field `{}`, line {}, column {})",
                inner,
                path,
                inner.line(),
                inner.column()
            ))
        })
    }

    /// [`validate`](Self::validate) with the errors joined into one.
    pub fn check(&self) -> Result<(), HarnessError> {
        self.validate()
            .map_err(|errs| HarnessError::Config(errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")))
    }

    /// Reads and parses a config file, returning the raw bytes as well.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), HarnessError> {
        let bytes = std::fs::read(path)
            .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| HarnessError::Config(format!("config {} is not UTF-8: {e}", path.display())))?;
        Ok((Self::parse(text)?, bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Whether any computation driven by this config draws random numbers.
    pub fn is_stochastic(&self) -> bool {
        self.monte_carlo_samples.is_some()
            || self
                .deviations
                .iter()
                .flatten()
                .any(|d| matches!(d, DeviationConfig::Dirichlet { .. }))
            || self
                .verify
                .as_ref()
                .is_some_and(|v| v.instances > 0 && v.checks.as_ref().is_none_or(|c| !c.is_empty()))
    }

    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let mut errs = Vec::new();
        if self.version != SCHEMA_VERSION {
            errs.push(field_error(
                "version",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.version),
            ));
        }
        let is_table = matches!(self.problem, ProblemConfig::Table);
        let has_tables = matches!(self.dataset, DatasetConfig::RiskTables(_));
        if is_table != has_tables {
            errs.push(field_error(
                "dataset",
                "the `table` problem takes its risks from `dataset.risk_tables`, and only it may",
            ));
        }
        match &self.dataset {
            DatasetConfig::Inline(points) if points.is_empty() => {
                errs.push(field_error("dataset.inline", "must contain at least one point"))
            }
            DatasetConfig::RiskTables(t) if t.is_empty() => {
                errs.push(field_error("dataset.risk_tables", "must contain at least one table"))
            }
            DatasetConfig::Distribution(d) => {
                if d.support.is_empty() {
                    errs.push(field_error("dataset.distribution.support", "must be nonempty"));
                }
                if d.n == 0 {
                    errs.push(field_error("dataset.distribution.n", "must be at least 1"));
                }
            }
            _ => {}
        }

        match &self.lambdas {
            LambdaGrid::LogRange { log_range: r } => {
                if !(r.min > 0.0 && r.max >= r.min && r.max.is_finite()) || r.count == 0 {
                    errs.push(field_error("lambdas.log_range", "needs 0 < min <= max < inf and count >= 1"));
                }
            }
            LambdaGrid::List(v) => {
                if v.is_empty() {
                    errs.push(field_error("lambdas", "must be nonempty"));
                }
                if v.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                    errs.push(field_error("lambdas", "every value must be positive and finite"));
                }
            }
        }

        for (name, list, ok) in [
            ("deltas", &self.deltas, (|d: f64| d >= 0.0 && d.is_finite()) as fn(f64) -> bool),
            ("epsilons", &self.epsilons, |e: f64| e > 0.0 && e < 1.0),
            ("c_values", &self.c_values, |c: f64| c > 0.0 && c.is_finite()),
        ] {
            if let Some(values) = list {
                if values.is_empty() {
                    errs.push(field_error(name, "must be nonempty when given"));
                }
                if let Some(bad) = values.iter().find(|&&v| !ok(v)) {
                    errs.push(field_error(name, format!("value {bad} out of range")));
                }
            }
        }

        let g = &self.gamma_grid;
        if !(g.min > 0.0 && g.max > g.min && g.max.is_finite()) || g.count < 2 {
            errs.push(field_error("gamma_grid", "needs 0 < min < max < inf and count >= 2"));
        }
        if let Some(0) = self.monte_carlo_samples {
            errs.push(field_error("monte_carlo_samples", "must be at least 1"));
        }
        if !(self.lambda_tol > 0.0) {
            errs.push(field_error("lambda_tol", "must be positive"));
        }
        if !(self.constraint_tol > 0.0) {
            errs.push(field_error("constraint_tol", "must be positive"));
        }
        if let Some(devs) = &self.deviations {
            if devs.is_empty() {
                errs.push(field_error("deviations", "must be nonempty when given"));
            }
            for (i, d) in devs.iter().enumerate() {
                if let DeviationConfig::Dirichlet { count: 0 } = d {
                    errs.push(field_error(&format!("deviations[{i}].count"), "must be at least 1"));
                }
            }
        }
        if let Some(v) = &self.verify {
            if let Some(checks) = &v.checks {
                for c in checks {
                    if !crate::verify::CHECKS.contains(&c.as_str()) {
                        errs.push(field_error(
                            "verify.checks",
                            format!("unknown check `{c}` (known: {})", crate::verify::CHECKS.join(", ")),
                        ));
                    }
                }
            }
            if let Some(b) = v.force_b_squared {
                if !(b >= 0.0 && b.is_finite()) {
                    errs.push(field_error("verify.force_b_squared", "must be finite and nonnegative"));
                }
            }
        }
        if self.is_stochastic() && self.seed.is_none() {
            errs.push(field_error(
                "seed",
                "required when Monte Carlo sampling, Dirichlet deviations or verification corpora are enabled",
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}
