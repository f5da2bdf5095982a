//! Sensitivity of the expected empirical risk to deviations from the Gibbs
//! solution, the variance constant bounding it, and the KL-ball constrained
//! risk minimizer.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::measure::{same_base, AtomizedMeasure, MeasureOnAtoms};
use crate::partition::{expected_risk, gibbs_posterior, GibbsPosterior};
use crate::risk::RiskTable;

/// Slack added to bound comparisons.
pub const BOUND_SLACK: f64 = 1e-9;

/// Log-spaced grid of regularization factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Default for GammaGrid {
    fn default() -> Self {
        Self {
            min: 1e-3,
            max: 1e6,
            count: 128,
        }
    }
}

impl GammaGrid {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        let g = Self { min, max, count };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 || !(self.min > 0.0) || !(self.max >= self.min) || !self.max.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "invalid gamma grid [{}, {}] with {} points",
                self.min, self.max, self.count
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return alloc::vec![self.min];
        }
        let (a, b) = (math::ln(self.min), math::ln(self.max));
        let step = (b - a) / (self.count - 1) as f64;
        (0..self.count)
            .map(|k| if k + 1 == self.count { self.max } else { math::exp(a + step * k as f64) })
            .collect()
    }

    /// The grid stretched by three decades at each end with twice the points.
    pub fn widened(&self) -> Self {
        Self {
            min: self.min * 1e-3,
            max: self.max * 1e3,
            count: self.count * 2,
        }
    }
}

/// Estimates of `B² = sup_γ K''(-1/γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BSquared {
    /// Largest variance on the grid points.
    pub grid_max: f64,
    /// Grid maximum refined by golden-section search around the best grid
    /// point, and compared with the `γ → ∞` limit (variance under the
    /// normalized reference). Never exceeds the true supremum.
    pub sup: f64,
    /// Regularization factor attaining `sup` (`+∞` for the limit).
    pub argmax_gamma: f64,
    /// `(max risk - min risk)² / 4` over the support: an upper bound on the
    /// variance of any distribution of the risk, hence on the supremum.
    pub popoviciu: f64,
}

fn check_base(q: &Arc<AtomizedMeasure>, risks: &RiskTable) -> Result<()> {
    if same_base(q, risks.base()) {
        Ok(())
    } else {
        Err(Error::BaseMismatch)
    }
}

/// Variance of the risk under the Gibbs solution at `gamma`, without
/// building the posterior.
fn tilted_variance(masses: &[f64], risks: &[f64], r_min: f64, gamma: f64) -> f64 {
    let mut top = f64::NEG_INFINITY;
    let logw: Vec<f64> = masses
        .iter()
        .zip(risks)
        .map(|(&m, &r)| {
            let a = if m > 0.0 {
                if gamma == f64::INFINITY {
                    math::ln(m)
                } else {
                    math::ln(m) - (r - r_min) / gamma
                }
            } else {
                f64::NEG_INFINITY
            };
            top = top.max(a);
            a
        })
        .collect();
    let w: Vec<f64> = logw.iter().map(|&a| math::exp(a - top)).collect();
    let total = math::sum(w.iter().copied());
    let mean = math::sum(w.iter().zip(risks).map(|(&p, &r)| p * r)) / total;
    math::sum(w.iter().zip(risks).map(|(&p, &r)| p * (r - mean) * (r - mean))) / total
}

pub fn b_squared(q: &Arc<AtomizedMeasure>, risks: &RiskTable, grid: &GammaGrid) -> Result<BSquared> {
    check_base(q, risks)?;
    grid.validate()?;
    let (r_min, r_max) = risks.support_range();
    if r_min == f64::INFINITY {
        return Err(Error::EmptySupport);
    }
    let masses = q.masses();
    let r = risks.risks();
    let var = |gamma: f64| tilted_variance(masses, r, r_min, gamma);

    let points = grid.points();
    let values: Vec<f64> = points.iter().map(|&g| var(g)).collect();
    let (best, grid_max) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) });

    let mut sup = grid_max;
    let mut argmax_gamma = points[best];
    if points.len() > 1 {
        let lo = math::ln(points[best.saturating_sub(1)]);
        let hi = math::ln(points[(best + 1).min(points.len() - 1)]);
        let (x, v) = golden_max(|s| var(math::exp(s)), lo, hi, 60);
        if v > sup {
            sup = v;
            argmax_gamma = math::exp(x);
        }
    }
    let limit = var(f64::INFINITY);
    if limit > sup {
        sup = limit;
        argmax_gamma = f64::INFINITY;
    }
    let range = r_max - r_min;
    Ok(BSquared {
        grid_max,
        sup,
        argmax_gamma,
        popoviciu: range * range / 4.0,
    })
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iterations: usize) -> (f64, f64) {
    let inv_phi = (math::sqrt(5.0) - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iterations {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd { (c, fc) } else { (d, fd) }
}

/// `S = R_z(P) - R_z(Gibbs(λ))`. Finite on atomized references; the `+∞`
/// branch of the definition (λ outside the finiteness domain) cannot occur.
pub fn sensitivity(
    q: &Arc<AtomizedMeasure>,
    risks: &RiskTable,
    lambda: f64,
    p: &MeasureOnAtoms,
) -> Result<f64> {
    let g = gibbs_posterior(q, risks, lambda)?;
    sensitivity_against(&g, p)
}

fn sensitivity_against(g: &GibbsPosterior, p: &MeasureOnAtoms) -> Result<f64> {
    let risks = g.risk_table();
    Ok(expected_risk(p, risks)? - expected_risk(g, risks)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub lambda: f64,
    pub sensitivity: f64,
    pub expected_risk: f64,
    pub gibbs_risk: f64,
    pub kl_to_gibbs: f64,
    /// Supremum estimate used for `bound`.
    pub b_squared: f64,
    pub b_squared_popoviciu: f64,
    /// `sqrt(2 B² D(P‖Gibbs))`.
    pub bound: f64,
    pub bound_popoviciu: f64,
    pub holds: bool,
    pub holds_popoviciu: bool,
    /// `R_z(P) ≥ R_z(Gibbs) - bound`.
    pub lower_holds: bool,
    /// `R_z(P) ≤ R_z(Gibbs) + bound`.
    pub upper_holds: bool,
    pub gamma_grid: GammaGrid,
    /// The grid was widened once after a first failing check.
    pub widened: bool,
}

fn bound_from(b2: f64, kl: f64) -> f64 {
    if kl == f64::INFINITY {
        f64::INFINITY
    } else {
        math::sqrt(2.0 * b2 * kl.max(0.0))
    }
}

impl SensitivityReport {
    fn assemble(
        lambda: f64,
        expected_risk: f64,
        gibbs_risk: f64,
        kl_to_gibbs: f64,
        b2: BSquared,
        gamma_grid: GammaGrid,
    ) -> Self {
        let mut report = Self {
            lambda,
            sensitivity: expected_risk - gibbs_risk,
            expected_risk,
            gibbs_risk,
            kl_to_gibbs,
            b_squared: b2.sup,
            b_squared_popoviciu: b2.popoviciu,
            bound: 0.0,
            bound_popoviciu: 0.0,
            holds: false,
            holds_popoviciu: false,
            lower_holds: false,
            upper_holds: false,
            gamma_grid,
            widened: false,
        };
        report.refresh();
        report
    }

    fn refresh(&mut self) {
        self.bound = bound_from(self.b_squared, self.kl_to_gibbs);
        self.bound_popoviciu = bound_from(self.b_squared_popoviciu, self.kl_to_gibbs);
        self.holds = self.sensitivity.abs() <= self.bound + BOUND_SLACK;
        self.holds_popoviciu = self.sensitivity.abs() <= self.bound_popoviciu + BOUND_SLACK;
        self.lower_holds = self.expected_risk >= self.gibbs_risk - self.bound - BOUND_SLACK;
        self.upper_holds = self.expected_risk <= self.gibbs_risk + self.bound + BOUND_SLACK;
    }

    /// The same report with `B²` replaced, e.g. to run a negative control.
    pub fn with_b_squared(mut self, b_squared: f64) -> Self {
        self.b_squared = b_squared;
        self.refresh();
        self
    }
}

/// Checks `|S| ≤ sqrt(2 B² D(P‖Gibbs(λ)))` and both one-sided forms.
///
/// If the check fails with the supremum estimated on `grid`, the grid is
/// widened once and the estimate recomputed before reporting.
pub fn certify_bound(
    q: &Arc<AtomizedMeasure>,
    risks: &RiskTable,
    lambda: f64,
    p: &MeasureOnAtoms,
    grid: &GammaGrid,
) -> Result<SensitivityReport> {
    let g = gibbs_posterior(q, risks, lambda)?;
    if !same_base(p.base(), q) {
        return Err(Error::BaseMismatch);
    }
    let risk_p = expected_risk(p, risks)?;
    let risk_g = expected_risk(&g, risks)?;
    let kl = g.relative_entropy_from(p.weights());
    let b2 = b_squared(q, risks, grid)?;
    let report = SensitivityReport::assemble(lambda, risk_p, risk_g, kl, b2, *grid);
    if report.holds {
        return Ok(report);
    }
    let wide = grid.widened();
    let b2 = b_squared(q, risks, &wide)?;
    let mut report = SensitivityReport::assemble(lambda, risk_p, risk_g, kl, b2, wide);
    report.widened = true;
    Ok(report)
}

/// Minimizer of `R_z(P)` over `D(P‖Gibbs(λ)) ≤ c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedSolution {
    /// Regularization factor of the minimizer, in `(0, λ]`; `0` when
    /// saturated.
    pub omega: f64,
    pub measure: MeasureOnAtoms,
    /// The Gibbs solution at `omega`, absent when saturated.
    pub posterior: Option<GibbsPosterior>,
    /// `D(measure‖Gibbs(λ))`.
    pub kl: f64,
    pub expected_risk: f64,
    /// `c` is at least the KL radius of the `ω → 0⁺` limit (the reference
    /// conditioned on its minimal-risk level set), so the constraint is
    /// inactive and that limit is returned.
    pub saturated: bool,
    /// KL radius of the `ω → 0⁺` limit.
    pub c_max: f64,
    pub iterations: usize,
}

/// Default tolerance on `|D(G_ω‖G_λ) - c|`.
pub const CONSTRAINT_TOL: f64 = 1e-8;

pub fn constrained_min(
    q: &Arc<AtomizedMeasure>,
    risks: &RiskTable,
    lambda: f64,
    c: f64,
    tol: f64,
) -> Result<ConstrainedSolution> {
    if !(c > 0.0) || c.is_nan() {
        return Err(Error::InvalidRadius(c));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("tolerance must be positive, got {tol}")));
    }
    let g_lambda = gibbs_posterior(q, risks, lambda)?;
    let (r_min, _) = risks.support_range();

    // ω → 0⁺ limit: Q restricted to the minimal-risk level set.
    let limit_weights: Vec<f64> = q
        .masses()
        .iter()
        .zip(risks.risks())
        .map(|(&m, &r)| if m > 0.0 && r == r_min { m } else { 0.0 })
        .collect();
    let limit = MeasureOnAtoms::normalized(q.clone(), limit_weights)?;
    let c_max = g_lambda.relative_entropy_from(limit.weights());

    if c >= c_max {
        let expected = expected_risk(&limit, risks)?;
        return Ok(ConstrainedSolution {
            omega: 0.0,
            measure: limit,
            posterior: None,
            kl: c_max,
            expected_risk: expected,
            saturated: true,
            c_max,
            iterations: 0,
        });
    }

    let calls = core::cell::Cell::new(0usize);
    let radius = |omega: f64| -> Result<(f64, GibbsPosterior)> {
        calls.set(calls.get() + 1);
        let g = gibbs_posterior(q, risks, omega)?;
        let d = g.relative_entropy_to(&g_lambda)?;
        Ok((d, g))
    };

    // g(ω) = D(G_ω‖G_λ) is nonincreasing on (0, λ] with g(λ) = 0 < c.
    let mut hi = lambda;
    let (mut hi_d, mut hi_g) = (0.0, g_lambda.clone());
    let mut lo = lambda / 2.0;
    let (mut lo_d, mut lo_g) = radius(lo)?;
    while lo_d < c {
        if lo < f64::MIN_POSITIVE * 1e10 {
            return Err(Error::NonConvergence {
                iterations: calls.get(),
                reason: alloc::format!("KL radius {lo_d} below c = {c} for every probed omega"),
            });
        }
        hi = lo;
        hi_d = lo_d;
        hi_g = lo_g;
        lo /= 2.0;
        (lo_d, lo_g) = radius(lo)?;
    }

    const MAX_ITERATIONS: usize = 400;
    while hi > lo * (1.0 + 1e-14) && calls.get() < MAX_ITERATIONS {
        let mid = math::sqrt(lo * hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        let (d, g) = radius(mid)?;
        if d >= c {
            lo = mid;
            lo_d = d;
            lo_g = g;
        } else {
            hi = mid;
            hi_d = d;
            hi_g = g;
        }
        if hi_d == c {
            break;
        }
    }
    let _ = lo_g;

    if (hi_d - c).abs() > tol {
        return Err(Error::NonConvergence {
            iterations: calls.get(),
            reason: alloc::format!(
                "KL radius {hi_d} at omega {hi} misses c = {c} by more than {tol} (lower end {lo} has {lo_d})"
            ),
        });
    }
    let expected = expected_risk(&hi_g, risks)?;
    Ok(ConstrainedSolution {
        omega: hi,
        measure: hi_g.to_measure(),
        posterior: Some(hi_g),
        kl: hi_d,
        expected_risk: expected,
        saturated: false,
        c_max,
        iterations: calls.get(),
    })
}
