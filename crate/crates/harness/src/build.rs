//! Turns a validated config into the objects the engine works on.

use std::path::Path;
use std::sync::Arc;

use ermrer::dataset_dist::DEFAULT_ENUMERATION_BUDGET;
use ermrer::measure::DEFAULT_ATOM_BUDGET;
use ermrer::{
    atomize_density, make_discrete, AtomizedMeasure, DatasetDistribution, DatasetEnsemble, Dataset, EnsembleMode,
    GammaGrid, Loss, MeasureKind, Predictor, ProblemSpec, RiskTable, SupportPoint,
};

use crate::config::{
    DatasetConfig, ExperimentConfig, LossName, MeasureKindName, PredictorName, ProblemConfig, ReferenceConfig,
};
use crate::error::{HarnessError, Result};

/// One dataset with its weight under the dataset law (1 for a fixed
/// dataset) and the empirical risk of every atom.
#[derive(Debug, Clone)]
pub struct Cell {
    pub id: u64,
    pub weight: f64,
    pub risks: RiskTable,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub q: Arc<AtomizedMeasure>,
    pub problem: Option<ProblemSpec>,
    pub datasets: Vec<Cell>,
    pub ensemble: Option<DatasetEnsemble>,
    pub lambdas: Vec<f64>,
    pub gamma_grid: GammaGrid,
    pub mode: EnsembleMode,
}

pub fn problem_spec(p: &ProblemConfig) -> Option<ProblemSpec> {
    Some(match p {
        ProblemConfig::Table => return None,
        ProblemConfig::LinearSquared => ProblemSpec::linear_squared(),
        ProblemConfig::Threshold01 => ProblemSpec::threshold_01(),
        ProblemConfig::Linear01 => ProblemSpec::linear_01(),
        ProblemConfig::Composite { predictor, loss } => {
            let predictor = match predictor {
                PredictorName::Linear => Predictor::Linear,
                PredictorName::Threshold => Predictor::Threshold,
            };
            let loss = match loss {
                LossName::Squared => Loss::Squared,
                LossName::Absolute => Loss::Absolute,
                LossName::ZeroOne => Loss::ZeroOne,
            };
            ProblemSpec::new("composite", predictor, loss)
        }
    })
}

fn kind(k: MeasureKindName) -> MeasureKind {
    match k {
        MeasureKindName::Probability => MeasureKind::Probability,
        MeasureKindName::Counting => MeasureKind::Counting,
    }
}

/// Named densities on `R^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NamedDensity {
    /// Constant 1 (Lebesgue).
    Uniform,
    /// Isotropic normal with the same mean in every coordinate.
    Gaussian { mu: f64, sigma: f64 },
    /// Sum of the coordinates.
    Linear,
}

impl NamedDensity {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "uniform" => return Ok(NamedDensity::Uniform),
            "linear" => return Ok(NamedDensity::Linear),
            _ => {}
        }
        let args = s
            .strip_prefix("gaussian(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| {
                HarnessError::Config(format!(
                    "reference.density: unknown density `{s}` (expected uniform, linear or gaussian(mu,sigma))"
                ))
            })?;
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        let parse = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| HarnessError::Config(format!("reference.density: `{t}` is not a number")))
        };
        if parts.len() != 2 {
            return Err(HarnessError::Config(
                "reference.density: gaussian takes two arguments (mu, sigma)".into(),
            ));
        }
        let (mu, sigma) = (parse(parts[0])?, parse(parts[1])?);
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(HarnessError::Config("reference.density: gaussian needs finite mu and sigma > 0".into()));
        }
        Ok(NamedDensity::Gaussian { mu, sigma })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            NamedDensity::Uniform => 1.0,
            NamedDensity::Linear => x.iter().sum(),
            NamedDensity::Gaussian { mu, sigma } => {
                let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                x.iter()
                    .map(|&v| norm * (-0.5 * ((v - mu) / sigma).powi(2)).exp())
                    .product()
            }
        }
    }
}

pub fn reference(r: &ReferenceConfig) -> Result<AtomizedMeasure> {
    let built = match r {
        ReferenceConfig::Atoms { measure, atoms } => {
            let masses: Vec<f64> = atoms.iter().map(|a| a.mass).collect();
            let locations: Vec<Vec<f64>> = atoms.iter().map(|a| a.location.clone()).collect();
            make_discrete(&masses, &locations, kind(*measure))
        }
        ReferenceConfig::Indexed { measure, masses } => AtomizedMeasure::indexed(masses, kind(*measure)),
        ReferenceConfig::Density {
            density,
            lower,
            upper,
            cells,
            budget,
        } => {
            let f = NamedDensity::parse(density)?;
            atomize_density(lower, upper, cells, budget.unwrap_or(DEFAULT_ATOM_BUDGET), |x| f.eval(x))
                .map(|m| m.with_truncation_note(format!("{density} density restricted to the box {lower:?}..{upper:?}")))
        }
    };
    built.map_err(|e| HarnessError::Config(format!("reference: {e}")))
}

/// Reads a dataset CSV with header `x_0,…,x_{d-1},y`.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| HarnessError::Config(format!("dataset.csv: cannot open {}: {e}", path.display())))?;
    let headers = reader.headers().map_err(HarnessError::config)?.clone();
    let d = headers.len().saturating_sub(1);
    let expected: Vec<String> = (0..d).map(|i| format!("x_{i}")).chain(["y".to_string()]).collect();
    if headers.len() < 2 || headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(HarnessError::Config(format!(
            "dataset.csv: header must be `{}`, found `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut pairs = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HarnessError::Config(format!("dataset.csv: row {}: {e}", row + 2)))?;
        let values: Vec<f64> = record
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| HarnessError::Config(format!("dataset.csv: row {}: {e}", row + 2)))?;
        let y = values[d];
        pairs.push((values[..d].to_vec(), y));
    }
    Dataset::from_pairs(pairs).map_err(|e| HarnessError::Config(format!("dataset.csv: {e}")))
}

pub fn distribution(config: &crate::config::DistributionConfig) -> Result<DatasetDistribution> {
    let support = config
        .support
        .iter()
        .map(|s| SupportPoint::new(s.x.clone(), s.y, s.p))
        .collect();
    DatasetDistribution::new(
        support,
        config.n,
        config.enumeration_budget.unwrap_or(DEFAULT_ENUMERATION_BUDGET),
    )
    .map_err(|e| HarnessError::Config(format!("dataset.distribution: {e}")))
}

/// Builds the reference, datasets and risk tables. `base_dir` resolves
/// relative dataset paths. `seed` is the effective seed after command-line
/// overrides.
pub fn prepare(config: &ExperimentConfig, base_dir: &Path, seed: Option<u64>) -> Result<Prepared> {
    let q = Arc::new(reference(&config.reference)?);
    let problem = problem_spec(&config.problem);
    let gamma_grid = GammaGrid::new(config.gamma_grid.min, config.gamma_grid.max, config.gamma_grid.count)
        .map_err(|e| HarnessError::Config(format!("gamma_grid: {e}")))?;
    let mode = match (config.monte_carlo_samples, seed) {
        (Some(samples), Some(seed)) => EnsembleMode::MonteCarlo { seed, samples },
        (Some(_), None) => return Err(HarnessError::Config("seed: required with monte_carlo_samples".into())),
        (None, _) => EnsembleMode::ExactEnumeration,
    };

    let table = |z: &Dataset, id: u64| -> Result<RiskTable> {
        let p = problem.as_ref().expect("validated: non-table problem");
        ermrer::risk_table(p, &q, &z.clone().with_id(id))
            .map_err(|e| HarnessError::Config(format!("dataset: risk evaluation failed: {e}")))
    };
    let single = |z: Dataset| -> Result<Vec<Cell>> {
        Ok(vec![Cell {
            id: 0,
            weight: 1.0,
            risks: table(&z, 0)?,
        }])
    };

    let mut ensemble = None;
    let datasets = match &config.dataset {
        DatasetConfig::Inline(points) => {
            let z = Dataset::from_pairs(points.iter().map(|p| (p.x.clone(), p.y)))
                .map_err(|e| HarnessError::Config(format!("dataset.inline: {e}")))?;
            single(z)?
        }
        DatasetConfig::Csv(path) => single(read_dataset_csv(&base_dir.join(path))?)?,
        DatasetConfig::RiskTables(tables) => tables
            .iter()
            .enumerate()
            .map(|(i, r)| {
                RiskTable::from_values(q.clone(), r.clone(), i as u64)
                    .map(|risks| Cell {
                        id: i as u64,
                        weight: 1.0 / tables.len() as f64,
                        risks,
                    })
                    .map_err(|e| HarnessError::Config(format!("dataset.risk_tables[{i}]: {e}")))
            })
            .collect::<Result<_>>()?,
        DatasetConfig::Distribution(d) => {
            let dist = distribution(d)?;
            let p = problem.as_ref().expect("validated: non-table problem");
            let e = DatasetEnsemble::build(p, &q, &dist, mode)
                .map_err(|e| HarnessError::Config(format!("dataset.distribution: {e}")))?;
            let cells = e
                .entries()
                .iter()
                .enumerate()
                .map(|(i, entry)| Cell {
                    id: i as u64,
                    weight: entry.weight,
                    risks: entry.risks.clone(),
                })
                .collect();
            ensemble = Some(e);
            cells
        }
    };

    Ok(Prepared {
        q,
        problem,
        datasets,
        ensemble,
        lambdas: config.lambdas.values(),
        gamma_grid,
        mode,
    })
}
