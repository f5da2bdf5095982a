//! (δ, ε)-optimality of Gibbs solutions.
//!
//! A Gibbs solution is (δ, ε)-optimal when it puts probability strictly
//! greater than `1 - ε` on the closed sub-level set `{θ : L_z(θ) ≤ δ}`.
//! The probability of a fixed sub-level set is nonincreasing in `λ`
//! (tilting by `exp(-L/λ)` has a monotone likelihood ratio), which makes a
//! log-scale bisection on `λ` exact up to its tolerance.

use alloc::string::String;
use alloc::sync::Arc;

use crate::error::{Error, Result};
use crate::math;
use crate::measure::{same_base, AtomizedMeasure};
use crate::partition::{gibbs_posterior, AtomProbabilities, GibbsPosterior};
use crate::risk::RiskTable;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub delta: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub sublevel_prob: f64,
    pub achieved: bool,
    pub delta_star: f64,
    pub coherent: bool,
    pub consistent: bool,
    pub iterations: usize,
}

/// Probability of `{θ : L_z(θ) ≤ δ}`.
pub fn sublevel_probability<P: AtomProbabilities + ?Sized>(
    p: &P,
    risks: &RiskTable,
    delta: f64,
) -> Result<f64> {
    if !same_base(p.base(), risks.base()) {
        return Err(Error::BaseMismatch);
    }
    let probs = p.probabilities()?;
    let s = math::sum(
        probs
            .iter()
            .zip(risks.risks())
            .filter(|(_, &r)| r <= delta)
            .map(|(&p, _)| p),
    );
    Ok(s.clamp(0.0, 1.0))
}

/// `δ* = inf{δ : Q(L_z(δ)) > 0}`, attained on finite atomizations as the
/// minimum risk over atoms with positive mass.
pub fn delta_star(q: &Arc<AtomizedMeasure>, risks: &RiskTable) -> Result<f64> {
    if !same_base(q, risks.base()) {
        return Err(Error::BaseMismatch);
    }
    let (lo, _) = risks.support_range();
    if lo == f64::INFINITY {
        Err(Error::EmptySupport)
    } else {
        Ok(lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceClass {
    /// `Q(L_z(δ)) > 0` for every `δ > 0`.
    pub coherent: bool,
    /// `Q({θ : L_z(θ) = δ*}) > 0`.
    pub consistent: bool,
    pub delta_star: f64,
    /// Reference mass of the `δ*`-level set.
    pub level_mass: f64,
}

/// Coherence and consistency of the reference for this risk table.
///
/// With finitely many atoms, "every positive sub-level set has positive
/// mass" holds exactly when some positive-mass atom has zero risk, i.e.
/// `δ* = 0`. A continuum reference could be coherent without attaining
/// zero; that case is not representable here.
pub fn classify_reference(q: &Arc<AtomizedMeasure>, risks: &RiskTable) -> Result<ReferenceClass> {
    let ds = delta_star(q, risks)?;
    let level_mass = math::sum(
        q.masses()
            .iter()
            .zip(risks.risks())
            .filter(|(&m, &r)| m > 0.0 && r == ds)
            .map(|(&m, _)| m),
    );
    Ok(ReferenceClass {
        coherent: ds == 0.0,
        consistent: level_mass > 0.0,
        delta_star: ds,
        level_mass,
    })
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(alloc::format!("epsilon must lie in (0, 1), got {epsilon}")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta >= 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(alloc::format!("delta must be finite and nonnegative, got {delta}")))
    }
}

/// Evaluates the (δ, ε) condition `P(L_z(δ)) > 1 - ε` for a Gibbs solution.
pub fn check_delta_eps(
    g: &GibbsPosterior,
    risks: &RiskTable,
    delta: f64,
    epsilon: f64,
) -> Result<OptimalityReport> {
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    let class = classify_reference(g.base(), risks)?;
    let sublevel_prob = sublevel_probability(g, risks, delta)?;
    Ok(OptimalityReport {
        delta,
        epsilon,
        lambda: g.lambda(),
        sublevel_prob,
        achieved: sublevel_prob > 1.0 - epsilon,
        delta_star: class.delta_star,
        coherent: class.coherent,
        consistent: class.consistent,
        iterations: 0,
    })
}

/// Bracket and stopping rule for [`find_lambda_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSearchConfig {
    pub lower: f64,
    pub upper: f64,
    /// How many times each end may be pushed out by `expansion_factor`.
    pub expansions: usize,
    pub expansion_factor: f64,
    /// Stop when `upper / lower ≤ 1 + tol`.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for LambdaSearchConfig {
    fn default() -> Self {
        Self {
            lower: 1e-6,
            upper: 1e6,
            expansions: 2,
            expansion_factor: 1e3,
            tol: 1e-4,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSearch {
    /// A regularization factor whose Gibbs solution is (δ, ε)-optimal.
    Found(OptimalityReport),
    /// No `λ > 0` works: `δ < δ*`, so the sub-level set has zero reference
    /// mass and the Gibbs probability of it tends to
    /// `limiting_probability` as `λ → 0⁺`.
    NotAchievable {
        delta: f64,
        epsilon: f64,
        delta_star: f64,
        limiting_probability: f64,
        reason: String,
    },
}

impl LambdaSearch {
    pub fn report(&self) -> Option<&OptimalityReport> {
        match self {
            LambdaSearch::Found(r) => Some(r),
            LambdaSearch::NotAchievable { .. } => None,
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        self.report().map(|r| r.lambda)
    }
}

/// Largest `λ` (up to relative tolerance `tol`) whose Gibbs solution is
/// (δ, ε)-optimal, using the default bracket `[1e-6, 1e6]` with each end
/// expandable twice by a factor of `1e3`.
pub fn find_lambda(
    q: &Arc<AtomizedMeasure>,
    risks: &RiskTable,
    delta: f64,
    epsilon: f64,
    tol: f64,
) -> Result<LambdaSearch> {
    let config = LambdaSearchConfig {
        tol,
        ..LambdaSearchConfig::default()
    };
    find_lambda_with(q, risks, delta, epsilon, &config)
}

pub fn find_lambda_with(
    q: &Arc<AtomizedMeasure>,
    risks: &RiskTable,
    delta: f64,
    epsilon: f64,
    config: &LambdaSearchConfig,
) -> Result<LambdaSearch> {
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    if !(config.tol > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("tolerance must be positive, got {}", config.tol)));
    }
    if !(config.lower > 0.0 && config.lower < config.upper && config.upper.is_finite()) {
        return Err(Error::InvalidArgument(String::from("invalid lambda bracket")));
    }
    let class = classify_reference(q, risks)?;
    if delta < class.delta_star {
        return Ok(LambdaSearch::NotAchievable {
            delta,
            epsilon,
            delta_star: class.delta_star,
            limiting_probability: 0.0,
            reason: alloc::format!(
                "delta {delta} is below delta* {}: the sub-level set has zero reference mass, \
                 so every Gibbs solution gives it probability 0 <= 1 - epsilon",
                class.delta_star
            ),
        });
    }

    let calls = core::cell::Cell::new(0usize);
    let probe = |lambda: f64| -> Result<(bool, f64)> {
        calls.set(calls.get() + 1);
        let g = gibbs_posterior(q, risks, lambda)?;
        let p = sublevel_probability(&g, risks, delta)?;
        Ok((p > 1.0 - epsilon, p))
    };

    let finish = |lambda: f64, p: f64, iterations: usize| {
        LambdaSearch::Found(OptimalityReport {
            delta,
            epsilon,
            lambda,
            sublevel_prob: p,
            achieved: true,
            delta_star: class.delta_star,
            coherent: class.coherent,
            consistent: class.consistent,
            iterations,
        })
    };

    let mut hi = config.upper;
    let (mut ok, mut p_hi) = probe(hi)?;
    let mut lo = config.lower;
    let mut p_lo = 0.0;
    if ok {
        // Push the upper end out; if it keeps achieving, report the last one.
        let mut expansions = 0;
        while ok {
            if expansions == config.expansions {
                return Ok(finish(hi, p_hi, calls.get()));
            }
            lo = hi;
            p_lo = p_hi;
            hi *= config.expansion_factor;
            expansions += 1;
            (ok, p_hi) = probe(hi)?;
        }
        ok = true;
    } else {
        (ok, p_lo) = probe(lo)?;
        let mut expansions = 0;
        while !ok && expansions < config.expansions {
            hi = lo;
            lo /= config.expansion_factor;
            expansions += 1;
            (ok, p_lo) = probe(lo)?;
        }
    }
    if !ok {
        return Err(Error::NonConvergence {
            iterations: calls.get(),
            reason: alloc::format!(
                "sub-level probability {p_lo} at lambda {lo} still <= 1 - epsilon; \
                 the limit as lambda -> 0 is 1 since delta >= delta*, but the bracket is exhausted"
            ),
        });
    }

    // Invariant: lo achieves, hi does not.
    while hi / lo > 1.0 + config.tol {
        if calls.get() >= config.max_iterations {
            return Err(Error::NonConvergence {
                iterations: calls.get(),
                reason: alloc::format!("bracket [{lo}, {hi}] did not shrink to relative width {}", config.tol),
            });
        }
        let mid = math::sqrt(lo * hi);
        let (ok, p) = probe(mid)?;
        if ok {
            lo = mid;
            p_lo = p;
        } else {
            hi = mid;
        }
    }
    Ok(finish(lo, p_lo, calls.get()))
}
