//! Distributions over datasets and the dataset-averaged sensitivity bounds.
//!
//! A dataset of `n` points is drawn i.i.d. from a finite-support law on
//! `(pattern, label)` pairs. Averaging the per-dataset Gibbs solutions over
//! this product law gives the marginal model measure `P_Θ`; the lautum
//! information is `∫ D(P_Θ ‖ P_{Θ|Z=z}) dP_Z(z)`. Expectations over datasets
//! are computed by exact enumeration, or estimated by seeded Monte Carlo
//! when the enumeration would exceed its budget.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use crate::error::{Error, Result};
use crate::math;
use crate::measure::{AtomizedMeasure, MeasureOnAtoms};
use crate::partition::{expected_risk, gibbs_posterior, GibbsPosterior};
use crate::risk::{risk_table, Dataset, DataPoint, Problem, RiskTable};
use crate::sensitivity::{b_squared, GammaGrid, BOUND_SLACK};

/// Tolerance on the total probability of a per-sample law.
pub const SUPPORT_MASS_TOL: f64 = 1e-10;

pub const DEFAULT_ENUMERATION_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SupportPoint {
    pub pattern: Vec<f64>,
    pub label: f64,
    pub probability: f64,
}

impl SupportPoint {
    pub fn new(pattern: Vec<f64>, label: f64, probability: f64) -> Self {
        Self {
            pattern,
            label,
            probability,
        }
    }
}

/// Finite-support law of one data point together with the sample size `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetDistribution {
    support: Vec<SupportPoint>,
    n: usize,
    enumeration_budget: usize,
}

impl DatasetDistribution {
    pub fn new(support: Vec<SupportPoint>, n: usize, enumeration_budget: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(String::from("sample count n must be at least 1")));
        }
        let first = support
            .first()
            .ok_or_else(|| Error::InvalidArgument(String::from("empty data-point support")))?;
        let dim = first.pattern.len();
        for (i, s) in support.iter().enumerate() {
            if s.pattern.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.pattern.len(),
                });
            }
            if !(s.probability >= 0.0) || !s.probability.is_finite() {
                return Err(Error::InvalidMass {
                    atom: i,
                    mass: s.probability,
                });
            }
        }
        let total = math::sum(support.iter().map(|s| s.probability));
        if (total - 1.0).abs() > SUPPORT_MASS_TOL {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self {
            support,
            n,
            enumeration_budget,
        })
    }

    pub fn support(&self) -> &[SupportPoint] {
        &self.support
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn enumeration_budget(&self) -> usize {
        self.enumeration_budget
    }

    /// Number of datasets with positive probability.
    pub fn dataset_count(&self) -> u128 {
        let k = self.positive_support().len() as u128;
        let mut total: u128 = 1;
        for _ in 0..self.n {
            total = total.saturating_mul(k);
        }
        total
    }

    /// Checks `y = f(θ*, x)` on every support point with positive probability.
    pub fn check_ground_truth<P: Problem + ?Sized>(&self, problem: &P, theta_star: &[f64]) -> Result<()> {
        for (i, s) in self.support.iter().enumerate() {
            if s.probability > 0.0 {
                let y = problem.predict(theta_star, &s.pattern)?;
                if y != s.label {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "support point {i} has label {} but the ground-truth model predicts {y}",
                        s.label
                    )));
                }
            }
        }
        Ok(())
    }

    fn positive_support(&self) -> Vec<usize> {
        (0..self.support.len())
            .filter(|&i| self.support[i].probability > 0.0)
            .collect()
    }

    fn dataset_from(&self, indices: &[usize], id: u64) -> Result<Dataset> {
        let points = indices
            .iter()
            .map(|&i| DataPoint::new(self.support[i].pattern.clone(), self.support[i].label))
            .collect();
        Ok(Dataset::new(points)?.with_id(id))
    }
}

/// All `|supp|ⁿ` ordered datasets with their product probabilities.
/// Zero-probability support points are left out.
pub fn enumerate_datasets(d: &DatasetDistribution) -> Result<Vec<(Dataset, f64)>> {
    let count = d.dataset_count();
    if count > d.enumeration_budget as u128 {
        return Err(Error::BudgetExceeded {
            requested: count,
            budget: d.enumeration_budget as u128,
        });
    }
    let support = d.positive_support();
    let log_p: Vec<f64> = support.iter().map(|&i| math::ln(d.support[i].probability)).collect();
    let mut out = Vec::with_capacity(count as usize);
    let mut digits = alloc::vec![0usize; d.n];
    for id in 0..count as u64 {
        let indices: Vec<usize> = digits.iter().map(|&k| support[k]).collect();
        let lp = math::sum(digits.iter().map(|&k| log_p[k]));
        out.push((d.dataset_from(&indices, id)?, math::exp(lp)));
        for pos in (0..d.n).rev() {
            digits[pos] += 1;
            if digits[pos] < support.len() {
                break;
            }
            digits[pos] = 0;
        }
    }
    Ok(out)
}

/// How expectations over datasets are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleMode {
    ExactEnumeration,
    MonteCarlo { seed: u64, samples: usize },
}

impl EnsembleMode {
    pub fn is_exact(&self) -> bool {
        matches!(self, EnsembleMode::ExactEnumeration)
    }
}

/// One dataset of an ensemble with its weight.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEntry {
    pub weight: f64,
    /// Number of Monte Carlo draws that produced this dataset (1 when exact).
    pub draws: usize,
    pub dataset: Dataset,
    pub risks: RiskTable,
}

/// Weighted datasets with their risk tables: the exact support of `P_Z` or
/// a Monte Carlo sample of it, duplicates merged.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEnsemble {
    entries: Vec<EnsembleEntry>,
    mode: EnsembleMode,
}

impl DatasetEnsemble {
    pub fn build<P: Problem + ?Sized>(
        problem: &P,
        q: &Arc<AtomizedMeasure>,
        d: &DatasetDistribution,
        mode: EnsembleMode,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        match mode {
            EnsembleMode::ExactEnumeration => {
                for (dataset, weight) in enumerate_datasets(d)? {
                    let risks = risk_table(problem, q, &dataset)?;
                    entries.push(EnsembleEntry {
                        weight,
                        draws: 1,
                        dataset,
                        risks,
                    });
                }
            }
            EnsembleMode::MonteCarlo { seed, samples } => {
                if samples == 0 {
                    return Err(Error::InvalidArgument(String::from(
                        "Monte Carlo mode needs at least one sample",
                    )));
                }
                let probs: Vec<f64> = d.support.iter().map(|s| s.probability).collect();
                let cdf = math::cumulative(&probs);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
                for _ in 0..samples {
                    let idx: Vec<usize> = (0..d.n)
                        .map(|_| math::inverse_cdf(&cdf, math::unit_f64(&mut rng)))
                        .collect();
                    *counts.entry(idx).or_insert(0) += 1;
                }
                for (id, (indices, draws)) in counts.into_iter().enumerate() {
                    let dataset = d.dataset_from(&indices, id as u64)?;
                    let risks = risk_table(problem, q, &dataset)?;
                    entries.push(EnsembleEntry {
                        weight: draws as f64 / samples as f64,
                        draws,
                        dataset,
                        risks,
                    });
                }
            }
        }
        Ok(Self { entries, mode })
    }

    pub fn entries(&self) -> &[EnsembleEntry] {
        &self.entries
    }

    pub fn mode(&self) -> EnsembleMode {
        self.mode
    }

    pub fn total_weight(&self) -> f64 {
        math::sum(self.entries.iter().map(|e| e.weight))
    }

    /// Gibbs solutions at `lambda` for every dataset, in entry order.
    pub fn posteriors(&self, q: &Arc<AtomizedMeasure>, lambda: f64) -> Result<Vec<GibbsPosterior>> {
        self.entries
            .iter()
            .map(|e| gibbs_posterior(q, &e.risks, lambda))
            .collect()
    }

    /// `P_Θ = Σ_z w_z P_{Θ|Z=z}`.
    pub fn mixture(&self, q: &Arc<AtomizedMeasure>, posteriors: &[GibbsPosterior]) -> Result<MeasureOnAtoms> {
        let mut acc = alloc::vec![math::CompensatedSum::new(); q.len()];
        for (e, g) in self.entries.iter().zip(posteriors) {
            for (a, &p) in acc.iter_mut().zip(g.probs()) {
                a.add(e.weight * p);
            }
        }
        MeasureOnAtoms::normalized(q.clone(), acc.iter().map(|a| a.value()).collect())
    }
}

pub fn mixture_posterior<P: Problem + ?Sized>(
    problem: &P,
    q: &Arc<AtomizedMeasure>,
    d: &DatasetDistribution,
    lambda: f64,
    mode: EnsembleMode,
) -> Result<MeasureOnAtoms> {
    let ensemble = DatasetEnsemble::build(problem, q, d, mode)?;
    let posteriors = ensemble.posteriors(q, lambda)?;
    ensemble.mixture(q, &posteriors)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LautumEstimate {
    pub value: f64,
    /// Delta-method standard error; `None` for exact enumeration.
    pub std_error: Option<f64>,
}

fn lautum_from(
    ensemble: &DatasetEnsemble,
    mixture: &MeasureOnAtoms,
    posteriors: &[GibbsPosterior],
) -> LautumEstimate {
    let p = mixture.weights();
    let kls: Vec<f64> = posteriors.iter().map(|g| g.relative_entropy_from(p)).collect();
    let value = math::sum(ensemble.entries.iter().zip(&kls).map(|(e, &k)| e.weight * k));
    let std_error = match ensemble.mode {
        EnsembleMode::ExactEnumeration => None,
        EnsembleMode::MonteCarlo { samples, .. } => {
            Some(influence_std_error(ensemble, p, posteriors, samples))
        }
    };
    LautumEstimate { value, std_error }
}

/// Standard error of the plug-in lautum estimate. The estimate is a smooth
/// function of the empirical dataset law; its influence function at dataset
/// `z` is
/// `ψ(z) = Σ_i (g_{z,i} - p_i)(log p_i - h_i) + Σ_i p_i (h_i - log g_{z,i})`
/// with `h_i = Σ_z w_z log g_{z,i}`, and the error is `sqrt(E[ψ²] / N)`.
fn influence_std_error(
    ensemble: &DatasetEnsemble,
    p: &[f64],
    posteriors: &[GibbsPosterior],
    samples: usize,
) -> f64 {
    let atoms: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let h: Vec<f64> = atoms
        .iter()
        .map(|&i| {
            math::sum(
                ensemble
                    .entries
                    .iter()
                    .zip(posteriors)
                    .map(|(e, g)| e.weight * g.log_probs()[i]),
            )
        })
        .collect();
    let second_moment = math::sum(ensemble.entries.iter().zip(posteriors).map(|(e, g)| {
        let psi = math::sum(atoms.iter().zip(&h).map(|(&i, &hi)| {
            let lg = g.log_probs()[i];
            (g.probs()[i] - p[i]) * (math::ln(p[i]) - hi) + p[i] * (hi - lg)
        }));
        e.weight * psi * psi
    }));
    math::sqrt(second_moment / samples as f64)
}

/// `L(Z; Θ) = ∫ D(P_Θ ‖ P_{Θ|Z=z}) dP_Z(z)`.
pub fn lautum_information<P: Problem + ?Sized>(
    problem: &P,
    q: &Arc<AtomizedMeasure>,
    d: &DatasetDistribution,
    lambda: f64,
    mode: EnsembleMode,
) -> Result<LautumEstimate> {
    let ensemble = DatasetEnsemble::build(problem, q, d, mode)?;
    let posteriors = ensemble.posteriors(q, lambda)?;
    let mixture = ensemble.mixture(q, &posteriors)?;
    Ok(lautum_from(&ensemble, &mixture, &posteriors))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalBSquared {
    /// `max_z` of the per-dataset supremum estimates.
    pub sup: f64,
    /// `max_z` of the per-dataset Popoviciu bounds.
    pub popoviciu: f64,
    /// Ensemble index of the dataset attaining `sup`.
    pub argmax_entry: usize,
}

fn global_from(per_dataset: &[crate::sensitivity::BSquared]) -> GlobalBSquared {
    let mut out = GlobalBSquared {
        sup: 0.0,
        popoviciu: 0.0,
        argmax_entry: 0,
    };
    for (i, b) in per_dataset.iter().enumerate() {
        if b.sup > out.sup {
            out.sup = b.sup;
            out.argmax_entry = i;
        }
        out.popoviciu = out.popoviciu.max(b.popoviciu);
    }
    out
}

/// `B²_Q = sup_{z ∈ supp P_Z} B²_{Q,z}`, over the enumerated or sampled
/// datasets.
pub fn global_b_squared<P: Problem + ?Sized>(
    problem: &P,
    q: &Arc<AtomizedMeasure>,
    d: &DatasetDistribution,
    grid: &GammaGrid,
    mode: EnsembleMode,
) -> Result<GlobalBSquared> {
    let ensemble = DatasetEnsemble::build(problem, q, d, mode)?;
    let per: Vec<_> = ensemble
        .entries
        .iter()
        .map(|e| b_squared(q, &e.risks, grid))
        .collect::<Result<_>>()?;
    Ok(global_from(&per))
}

/// Which variance constant enters the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundConstant {
    /// Supremum of the Gibbs variance estimated on a γ-grid.
    GridSup,
    /// `(range of risks)² / 4`, an upper bound for bounded risks.
    Popoviciu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LautumReport {
    pub lambda: f64,
    pub lautum: f64,
    pub lautum_std_error: Option<f64>,
    /// `B²_Q` of the selected kind.
    pub b_squared_global: f64,
    pub b_squared_global_sup: f64,
    pub b_squared_global_popoviciu: f64,
    /// `Σ_z P_Z(z) |S(z, P_Θ)|`.
    pub lhs: f64,
    /// `Σ_z P_Z(z) sqrt(2 B²_{Q,z} D(P_Θ‖P_{Θ|Z=z}))`.
    pub rhs_per_dataset: f64,
    /// `sqrt(2 B²_Q L(Z;Θ))`.
    pub rhs_lautum: f64,
    pub holds: bool,
    pub holds_per_dataset: bool,
    pub constant: BoundConstant,
    pub mode: EnsembleMode,
    pub datasets: usize,
    /// The reference is a truncation of a larger measure.
    pub truncated: bool,
}

/// Evaluates both dataset-averaged bounds with the deviation measure fixed
/// to the mixture `P_Θ`; each right-hand side is compared with the
/// left-hand side independently.
pub fn verify_expected_sensitivity_bounds<P: Problem + ?Sized>(
    problem: &P,
    q: &Arc<AtomizedMeasure>,
    d: &DatasetDistribution,
    lambda: f64,
    grid: &GammaGrid,
    mode: EnsembleMode,
    constant: BoundConstant,
) -> Result<LautumReport> {
    let ensemble = DatasetEnsemble::build(problem, q, d, mode)?;
    verify_on_ensemble(&ensemble, q, lambda, grid, constant)
}

pub fn verify_on_ensemble(
    ensemble: &DatasetEnsemble,
    q: &Arc<AtomizedMeasure>,
    lambda: f64,
    grid: &GammaGrid,
    constant: BoundConstant,
) -> Result<LautumReport> {
    let posteriors = ensemble.posteriors(q, lambda)?;
    let mixture = ensemble.mixture(q, &posteriors)?;
    let lautum = lautum_from(ensemble, &mixture, &posteriors);
    let per_b2: Vec<_> = ensemble
        .entries
        .iter()
        .map(|e| b_squared(q, &e.risks, grid))
        .collect::<Result<_>>()?;
    let global = global_from(&per_b2);
    let pick = |b: &crate::sensitivity::BSquared| match constant {
        BoundConstant::GridSup => b.sup,
        BoundConstant::Popoviciu => b.popoviciu,
    };

    let mut lhs = math::CompensatedSum::new();
    let mut rhs_per_dataset = math::CompensatedSum::new();
    for ((e, g), b2) in ensemble.entries.iter().zip(&posteriors).zip(&per_b2) {
        let s = expected_risk(&mixture, &e.risks)? - expected_risk(g, &e.risks)?;
        lhs.add(e.weight * s.abs());
        let kl = g.relative_entropy_from(mixture.weights());
        rhs_per_dataset.add(e.weight * math::sqrt(2.0 * pick(b2) * kl.max(0.0)));
    }
    let b2_global = match constant {
        BoundConstant::GridSup => global.sup,
        BoundConstant::Popoviciu => global.popoviciu,
    };
    let lhs = lhs.value();
    let rhs_per_dataset = rhs_per_dataset.value();
    let rhs_lautum = math::sqrt(2.0 * b2_global * lautum.value.max(0.0));
    Ok(LautumReport {
        lambda,
        lautum: lautum.value,
        lautum_std_error: lautum.std_error,
        b_squared_global: b2_global,
        b_squared_global_sup: global.sup,
        b_squared_global_popoviciu: global.popoviciu,
        lhs,
        rhs_per_dataset,
        rhs_lautum,
        holds: lhs <= rhs_lautum + BOUND_SLACK,
        holds_per_dataset: lhs <= rhs_per_dataset + BOUND_SLACK,
        constant,
        mode: ensemble.mode,
        datasets: ensemble.entries.len(),
        truncated: q.is_truncated(),
    })
}
