//! Datasets, predictor/loss pairs and empirical risks.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::measure::AtomizedMeasure;

#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub pattern: Vec<f64>,
    pub label: f64,
}

impl DataPoint {
    pub fn new(pattern: Vec<f64>, label: f64) -> Self {
        Self { pattern, label }
    }
}

/// A nonempty sequence of labeled patterns sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<DataPoint>,
    dim: usize,
    id: u64,
}

impl Dataset {
    pub fn new(points: Vec<DataPoint>) -> Result<Self> {
        let first = points.first().ok_or_else(|| {
            Error::InvalidArgument(String::from("dataset must contain at least one point"))
        })?;
        let dim = first.pattern.len();
        for (i, p) in points.iter().enumerate() {
            if p.pattern.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.pattern.len(),
                });
            }
            if !p.label.is_finite() || p.pattern.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "data point {i} has a non-finite coordinate"
                )));
            }
        }
        Ok(Self { points, dim, id: 0 })
    }

    /// Builds a dataset from `(pattern, label)` pairs.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<f64>, f64)>,
    {
        Self::new(pairs.into_iter().map(|(x, y)| DataPoint::new(x, y)).collect())
    }

    pub fn with_id(mut self, id: u64) -> Self {
        self.id = id;
        self
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn push(&mut self, point: DataPoint) -> Result<()> {
        if point.pattern.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: point.pattern.len(),
            });
        }
        self.points.push(point);
        Ok(())
    }
}

/// A predictor `f(θ, x)` paired with a loss `ℓ(predicted, label)`.
pub trait Problem {
    fn name(&self) -> &str;

    fn predict(&self, theta: &[f64], pattern: &[f64]) -> Result<f64>;

    fn loss(&self, predicted: f64, label: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Predictor {
    /// `θᵀx`
    Linear,
    /// `1{θᵀx ≥ 0}`
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Loss {
    Squared,
    Absolute,
    /// 1 when the prediction differs from the label, else 0.
    ZeroOne,
}

impl Predictor {
    pub fn apply(self, theta: &[f64], pattern: &[f64]) -> Result<f64> {
        if theta.len() != pattern.len() {
            return Err(Error::DimensionMismatch {
                expected: pattern.len(),
                found: theta.len(),
            });
        }
        let dot: f64 = theta.iter().zip(pattern).map(|(a, b)| a * b).sum();
        Ok(match self {
            Predictor::Linear => dot,
            Predictor::Threshold => {
                if dot >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }
}

impl Loss {
    pub fn apply(self, predicted: f64, label: f64) -> f64 {
        match self {
            Loss::Squared => (predicted - label) * (predicted - label),
            Loss::Absolute => (predicted - label).abs(),
            Loss::ZeroOne => {
                if predicted == label {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

/// Built-in predictor/loss families.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub predictor: Predictor,
    pub loss: Loss,
}

impl ProblemSpec {
    pub fn new(name: impl Into<String>, predictor: Predictor, loss: Loss) -> Self {
        Self {
            name: name.into(),
            predictor,
            loss,
        }
    }

    /// `f(θ,x) = θᵀx` with squared loss.
    pub fn linear_squared() -> Self {
        Self::new("linear-squared", Predictor::Linear, Loss::Squared)
    }

    /// `f(θ,x) = 1{θᵀx ≥ 0}` with 0/1 loss.
    pub fn threshold_01() -> Self {
        Self::new("threshold-01", Predictor::Threshold, Loss::ZeroOne)
    }

    /// `f(θ,x) = θᵀx` with 0/1 loss.
    pub fn linear_01() -> Self {
        Self::new("linear-01", Predictor::Linear, Loss::ZeroOne)
    }
}

impl Problem for ProblemSpec {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, theta: &[f64], pattern: &[f64]) -> Result<f64> {
        self.predictor.apply(theta, pattern)
    }

    fn loss(&self, predicted: f64, label: f64) -> f64 {
        self.loss.apply(predicted, label)
    }
}

/// Spot-checks `ℓ(y, y) = 0` on every label of the dataset.
pub fn check_loss_identity<P: Problem + ?Sized>(problem: &P, z: &Dataset) -> Result<()> {
    for (i, p) in z.points().iter().enumerate() {
        let v = problem.loss(p.label, p.label);
        if v != 0.0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "loss of problem '{}' is {v} on the exact label of point {i}",
                problem.name()
            )));
        }
    }
    Ok(())
}

fn point_loss<P: Problem + ?Sized>(
    problem: &P,
    theta: &[f64],
    point: &DataPoint,
    index: usize,
    atom: Option<usize>,
) -> Result<f64> {
    let value = problem.loss(problem.predict(theta, &point.pattern)?, point.label);
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss { atom, point: index, value });
    }
    if value < 0.0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "negative loss {value} at data point {index}"
        )));
    }
    Ok(value)
}

fn mean_loss<P: Problem + ?Sized>(
    problem: &P,
    theta: &[f64],
    z: &Dataset,
    atom: Option<usize>,
) -> Result<f64> {
    let mut acc = math::CompensatedSum::new();
    for (i, p) in z.points().iter().enumerate() {
        acc.add(point_loss(problem, theta, p, i, atom)?);
    }
    Ok(acc.value() / z.len() as f64)
}

/// `L_z(θ) = (1/n) Σ ℓ(f(θ, x_i), y_i)`.
pub fn empirical_risk<P: Problem + ?Sized>(problem: &P, theta: &[f64], z: &Dataset) -> Result<f64> {
    mean_loss(problem, theta, z, None)
}

/// Empirical risks of every atom of a reference measure for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskTable {
    base: Arc<AtomizedMeasure>,
    risks: Vec<f64>,
    dataset_id: u64,
}

impl RiskTable {
    /// Risks given directly per atom.
    pub fn from_values(base: Arc<AtomizedMeasure>, risks: Vec<f64>, dataset_id: u64) -> Result<Self> {
        if risks.len() != base.len() {
            return Err(Error::BaseMismatch);
        }
        for (atom, &r) in risks.iter().enumerate() {
            if !r.is_finite() {
                return Err(Error::NonFiniteLoss { atom: Some(atom), point: 0, value: r });
            }
            if r < 0.0 {
                return Err(Error::InvalidArgument(alloc::format!(
                    "negative risk {r} at atom {atom}"
                )));
            }
        }
        Ok(Self { base, risks, dataset_id })
    }

    pub fn base(&self) -> &Arc<AtomizedMeasure> {
        &self.base
    }

    pub fn risks(&self) -> &[f64] {
        &self.risks
    }

    pub fn dataset_id(&self) -> u64 {
        self.dataset_id
    }

    pub fn len(&self) -> usize {
        self.risks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.risks.is_empty()
    }

    /// Smallest and largest risk over atoms with positive reference mass.
    pub fn support_range(&self) -> (f64, f64) {
        self.risks
            .iter()
            .zip(self.base.masses())
            .filter(|(_, &m)| m > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&r, _)| {
                (lo.min(r), hi.max(r))
            })
    }
}

/// Evaluates `L_z` at every atom location of `q`.
pub fn risk_table<P: Problem + ?Sized>(
    problem: &P,
    q: &Arc<AtomizedMeasure>,
    z: &Dataset,
) -> Result<RiskTable> {
    let mut risks = Vec::with_capacity(q.len());
    for atom in q.atoms() {
        risks.push(mean_loss(problem, atom.location, z, Some(atom.id))?);
    }
    Ok(RiskTable {
        base: q.clone(),
        risks,
        dataset_id: z.id(),
    })
}
