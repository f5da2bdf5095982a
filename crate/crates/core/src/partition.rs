//! Log-partition function, Gibbs solution, cumulants and the regularized
//! objective.
//!
//! For a reference `Q` with atoms `(m_i)` and risks `(r_i)`:
//!
//! * `K(t) = log Σ m_i exp(t r_i)`
//! * the Gibbs solution at regularization `λ` has `dP/dQ(θ_i) = exp(-K(-1/λ) - r_i/λ)`
//! * the mean, variance and third cumulant of the risk under the Gibbs
//!   solution are the first three derivatives of `K` at `-1/λ`.
//!
//! Every integral is a finite sum, so `K` is finite for every `t` and the
//! Gibbs solution exists for every `λ > 0`. Overflow is avoided by shifting
//! exponents by the extreme risk before exponentiating.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use crate::error::{Error, Result};
use crate::math;
use crate::measure::{same_base, AtomizedMeasure, MeasureKind, MeasureOnAtoms};
use crate::risk::RiskTable;

/// Anything that assigns probabilities to the atoms of a base measure.
pub trait AtomProbabilities {
    fn base(&self) -> &Arc<AtomizedMeasure>;

    /// Probability of each atom. Must sum to one.
    fn probabilities(&self) -> Result<&[f64]>;
}

impl AtomProbabilities for MeasureOnAtoms {
    fn base(&self) -> &Arc<AtomizedMeasure> {
        MeasureOnAtoms::base(self)
    }

    fn probabilities(&self) -> Result<&[f64]> {
        if !self.is_normalized() {
            return Err(Error::InvalidArgument(alloc::format!(
                "measure is not normalized (total {})",
                self.total()
            )));
        }
        Ok(self.weights())
    }
}

impl AtomProbabilities for GibbsPosterior {
    fn base(&self) -> &Arc<AtomizedMeasure> {
        self.risks.base()
    }

    fn probabilities(&self) -> Result<&[f64]> {
        Ok(&self.probs)
    }
}

fn check_base(q: &Arc<AtomizedMeasure>, risks: &RiskTable) -> Result<()> {
    if same_base(q, risks.base()) {
        Ok(())
    } else {
        Err(Error::BaseMismatch)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(alloc::format!(
            "regularization factor must be positive and finite, got {lambda}"
        )))
    }
}

/// `K(t) = log Σ_i m_i exp(t r_i)` over atoms with positive mass.
pub fn log_partition(q: &Arc<AtomizedMeasure>, risks: &RiskTable, t: f64) -> Result<f64> {
    check_base(q, risks)?;
    if !t.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!("non-finite tilt {t}")));
    }
    Ok(log_partition_unchecked(q.masses(), risks.risks(), t))
}

pub(crate) fn log_partition_unchecked(masses: &[f64], risks: &[f64], t: f64) -> f64 {
    // Shift by the risk that maximizes t * r so the largest exponent is log m.
    let pivot = masses
        .iter()
        .zip(risks)
        .filter(|(&m, _)| m > 0.0)
        .map(|(_, &r)| r)
        .fold(None, |acc: Option<f64>, r| match acc {
            None => Some(r),
            Some(a) if (t >= 0.0 && r > a) || (t < 0.0 && r < a) => Some(r),
            Some(a) => Some(a),
        });
    let Some(pivot) = pivot else {
        return f64::NEG_INFINITY;
    };
    let exponents: Vec<f64> = masses
        .iter()
        .zip(risks)
        .map(|(&m, &r)| {
            if m > 0.0 {
                math::ln(m) + t * (r - pivot)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    t * pivot + math::log_sum_exp(&exponents)
}

/// Domain of regularization factors for which the Gibbs solution exists.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitenessDomain {
    /// Open lower end; always 0.
    pub lower: f64,
    /// Open upper end; always `+∞`.
    pub upper: f64,
    /// The log-partition function is an exact finite sum.
    pub exact_finite_sum: bool,
    /// The reference is a probability measure, for which the domain is
    /// `(0, +∞)` independently of any truncation.
    pub probability_reference: bool,
    /// The atoms stand in for a larger parent measure whose own domain may
    /// be smaller than the one reported here.
    pub truncated: bool,
}

impl FinitenessDomain {
    pub fn contains(&self, lambda: f64) -> bool {
        lambda > self.lower && lambda < self.upper
    }
}

pub fn finiteness_domain(q: &Arc<AtomizedMeasure>, risks: &RiskTable) -> Result<FinitenessDomain> {
    check_base(q, risks)?;
    Ok(FinitenessDomain {
        lower: 0.0,
        upper: f64::INFINITY,
        exact_finite_sum: true,
        probability_reference: q.kind() == MeasureKind::Probability,
        truncated: q.is_truncated(),
    })
}

/// The unique minimizer of `R_z(P) + λ D(P‖Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsPosterior {
    risks: RiskTable,
    lambda: f64,
    log_normalizer: f64,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl GibbsPosterior {
    pub fn base(&self) -> &Arc<AtomizedMeasure> {
        self.risks.base()
    }

    pub fn risk_table(&self) -> &RiskTable {
        &self.risks
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `K(-1/λ)`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Log-probabilities; finite exactly on atoms with positive reference
    /// mass, even where `probs` underflows to zero.
    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// `dP/dQ` at atom `i`.
    pub fn radon_nikodym(&self, i: usize) -> f64 {
        math::exp(-self.log_normalizer - self.risks.risks()[i] / self.lambda)
    }

    /// True when the reference is a truncation of a larger measure, for
    /// which the parent problem may have no solution at this `λ`.
    pub fn is_truncated(&self) -> bool {
        self.base().is_truncated()
    }

    pub fn to_measure(&self) -> MeasureOnAtoms {
        MeasureOnAtoms::new(self.base().clone(), self.probs.clone())
            .expect("posterior probabilities are valid weights")
    }

    /// `D(P‖self)` for a probability vector `p`. Atoms whose probability
    /// underflowed are handled in log space so the result stays finite for
    /// every `P ≪ Q`. Rounding residue below zero is clipped.
    pub fn relative_entropy_from(&self, p: &[f64]) -> f64 {
        let mut acc = math::CompensatedSum::new();
        for ((&pi, &gi), &lgi) in p.iter().zip(&self.probs).zip(&self.log_probs) {
            if pi > 0.0 {
                if lgi == f64::NEG_INFINITY {
                    return f64::INFINITY;
                }
                if gi >= f64::MIN_POSITIVE {
                    acc.add(pi * math::ln(pi / gi));
                } else {
                    acc.add(pi * (math::ln(pi) - lgi));
                }
            }
        }
        acc.value().max(0.0)
    }

    /// `D(self‖other)` between two Gibbs solutions on the same atoms,
    /// computed from log-probabilities.
    pub fn relative_entropy_to(&self, other: &GibbsPosterior) -> Result<f64> {
        if !same_base(self.base(), other.base()) {
            return Err(Error::BaseMismatch);
        }
        let mut acc = math::CompensatedSum::new();
        for ((&p, &lp), &lq) in self.probs.iter().zip(&self.log_probs).zip(&other.log_probs) {
            if lp == f64::NEG_INFINITY {
                continue;
            }
            if lq == f64::NEG_INFINITY {
                return Ok(f64::INFINITY);
            }
            if p > 0.0 {
                acc.add(p * (lp - lq));
            }
        }
        Ok(acc.value().max(0.0))
    }
}

/// Gibbs solution with `probs_i ∝ m_i exp(-r_i/λ)`.
pub fn gibbs_posterior(q: &Arc<AtomizedMeasure>, risks: &RiskTable, lambda: f64) -> Result<GibbsPosterior> {
    check_base(q, risks)?;
    check_lambda(lambda)?;
    let masses = q.masses();
    let r = risks.risks();
    let r_min = masses
        .iter()
        .zip(r)
        .filter(|(&m, _)| m > 0.0)
        .map(|(_, &x)| x)
        .fold(f64::INFINITY, f64::min);
    if r_min == f64::INFINITY {
        return Err(Error::EmptySupport);
    }
    let shifted: Vec<f64> = masses
        .iter()
        .zip(r)
        .map(|(&m, &x)| {
            if m > 0.0 {
                math::ln(m) - (x - r_min) / lambda
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let shifted_lse = math::log_sum_exp(&shifted);
    let log_normalizer = -r_min / lambda + shifted_lse;
    let top = shifted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = shifted.iter().map(|&a| math::exp(a - top)).collect();
    let total = math::sum(w.iter().copied());
    let probs = w.iter().map(|&x| x / total).collect();
    let log_probs = shifted.iter().map(|&a| a - shifted_lse).collect();
    Ok(GibbsPosterior {
        risks: risks.clone(),
        lambda,
        log_normalizer,
        probs,
        log_probs,
    })
}

/// `R_z(P) = Σ_i p_i r_i`.
pub fn expected_risk<P: AtomProbabilities + ?Sized>(p: &P, risks: &RiskTable) -> Result<f64> {
    if !same_base(p.base(), risks.base()) {
        return Err(Error::BaseMismatch);
    }
    let probs = p.probabilities()?;
    Ok(math::sum(probs.iter().zip(risks.risks()).map(|(&a, &b)| a * b)))
}

/// Cumulant of order 1 (mean), 2 (variance) or 3 (third central moment)
/// of the risk under the Gibbs solution; these equal `K'`, `K''`, `K'''`
/// at `-1/λ`.
pub fn cumulant(g: &GibbsPosterior, order: u8) -> Result<f64> {
    let r = g.risks.risks();
    let mean = math::sum(g.probs.iter().zip(r).map(|(&p, &x)| p * x));
    match order {
        1 => Ok(mean),
        2 => Ok(math::sum(
            g.probs.iter().zip(r).map(|(&p, &x)| p * (x - mean) * (x - mean)),
        )),
        3 => Ok(math::sum(g.probs.iter().zip(r).map(|(&p, &x)| {
            let d = x - mean;
            p * d * d * d
        }))),
        _ => Err(Error::InvalidArgument(alloc::format!(
            "cumulant order must be 1, 2 or 3, got {order}"
        ))),
    }
}

/// `R_z(P) + λ D(P‖Q)`, with `Q` taken as unnormalized weights. `+∞` when
/// `P` charges an atom of zero reference mass.
pub fn erm_rer_objective(
    p: &MeasureOnAtoms,
    q: &Arc<AtomizedMeasure>,
    risks: &RiskTable,
    lambda: f64,
) -> Result<f64> {
    check_base(q, risks)?;
    check_lambda(lambda)?;
    if !same_base(p.base(), q) {
        return Err(Error::BaseMismatch);
    }
    let probs = AtomProbabilities::probabilities(p)?;
    let kl = crate::measure::kl_terms(probs, q.masses());
    if kl == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let risk = math::sum(probs.iter().zip(risks.risks()).map(|(&a, &b)| a * b));
    Ok(risk + lambda * kl)
}

/// Draws `count` atom ids by inverse-CDF sampling, deterministically in
/// `seed`.
pub fn sample(g: &GibbsPosterior, seed: u64, count: usize) -> Result<Vec<usize>> {
    if count == 0 {
        return Err(Error::InvalidArgument(String::from("sample count must be at least 1")));
    }
    let cdf = math::cumulative(&g.probs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| math::inverse_cdf(&cdf, math::unit_f64(&mut rng)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    // Independent oracles: plain f64 arithmetic in std, no shifting.
    fn t3() -> (Arc<AtomizedMeasure>, RiskTable) {
        let q = Arc::new(AtomizedMeasure::uniform(3).unwrap());
        let r = RiskTable::from_values(q.clone(), vec![0.0, 1.0, 2.0], 0).unwrap();
        (q, r)
    }

    fn oracle_probs(lambda: f64) -> [f64; 3] {
        let w = [1.0, (-1.0 / lambda).exp(), (-2.0 / lambda).exp()];
        let s: f64 = w.iter().sum();
        [w[0] / s, w[1] / s, w[2] / s]
    }

    #[test]
    fn log_partition_examples() {
        let (q, r) = t3();
        assert!(log_partition(&q, &r, 0.0).unwrap().abs() < 1e-15);
        let e1 = (-1.0f64).exp();
        let e2 = (-2.0f64).exp();
        let oracle = ((1.0 + e1 + e2) / 3.0).ln();
        let k = log_partition(&q, &r, -1.0).unwrap();
        assert!((k - oracle).abs() < 1e-14);
        assert!((k + 0.691007).abs() < 1e-6);

        let c = Arc::new(AtomizedMeasure::indexed(&[1.0, 1.0, 1.0], MeasureKind::Counting).unwrap());
        let rc = RiskTable::from_values(c.clone(), vec![0.0, 1.0, 2.0], 0).unwrap();
        let kc = log_partition(&c, &rc, -1.0).unwrap();
        assert!((kc - (1.0 + e1 + e2).ln()).abs() < 1e-14);
        assert!((kc - 0.407606).abs() < 1e-6);
    }

    #[test]
    fn log_partition_is_stable_and_monotone() {
        let q = Arc::new(AtomizedMeasure::indexed(&[1.0, 2.0], MeasureKind::Counting).unwrap());
        let r = RiskTable::from_values(q.clone(), vec![1000.0, 500.0], 0).unwrap();
        let k = log_partition(&q, &r, 10.0).unwrap();
        assert!((k - 10_000.0).abs() < 1e-9);
        let k = log_partition(&q, &r, -10.0).unwrap();
        assert!((k - (-5000.0 + 2f64.ln())).abs() < 1e-9);
        let mut last = f64::NEG_INFINITY;
        for i in -50..=50 {
            let k = log_partition(&q, &r, i as f64 * 0.01).unwrap();
            assert!(k >= last);
            last = k;
        }
    }

    #[test]
    fn finiteness_domain_flags() {
        let (q, r) = t3();
        let d = finiteness_domain(&q, &r).unwrap();
        assert_eq!((d.lower, d.upper), (0.0, f64::INFINITY));
        assert!(d.exact_finite_sum && d.probability_reference && !d.truncated);
        assert!(d.contains(1e-300) && d.contains(1e300));
        let c = Arc::new(AtomizedMeasure::indexed(&[1.0, 1.0, 1.0], MeasureKind::Counting).unwrap());
        let rc = RiskTable::from_values(c.clone(), vec![0.0, 1.0, 2.0], 0).unwrap();
        assert!(!finiteness_domain(&c, &rc).unwrap().probability_reference);
        let other = Arc::new(AtomizedMeasure::uniform(2).unwrap());
        assert_eq!(finiteness_domain(&other, &r), Err(Error::BaseMismatch));
    }

    #[test]
    fn gibbs_t3_matches_normalization_oracle() {
        let (q, r) = t3();
        let g = gibbs_posterior(&q, &r, 1.0).unwrap();
        let o = oracle_probs(1.0);
        for (p, e) in g.probs().iter().zip(&o) {
            assert!((p - e).abs() < 1e-15);
        }
        assert!((g.probs()[0] - 0.66524).abs() < 1e-5);
        assert!((g.probs()[1] - 0.24473).abs() < 1e-5);
        assert!((g.probs()[2] - 0.09003).abs() < 1e-5);
        assert!((g.log_normalizer() - log_partition(&q, &r, -1.0).unwrap()).abs() < 1e-15);
        for i in 0..3 {
            let lhs = g.probs()[i] * g.log_normalizer().exp();
            let rhs = q.mass(i) * (-r.risks()[i]).exp();
            assert!((lhs - rhs).abs() <= 1e-9 * rhs);
            assert!((g.radon_nikodym(i) * q.mass(i) - g.probs()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn gibbs_limits() {
        let (q, r) = t3();
        let g = gibbs_posterior(&q, &r, 1e6).unwrap();
        for p in g.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-5);
        }
        let flat = RiskTable::from_values(q.clone(), vec![4.0, 4.0, 4.0], 0).unwrap();
        let g = gibbs_posterior(&q, &flat, 0.37).unwrap();
        for p in g.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        // Tiny λ with large risks: no overflow, log-probs stay finite.
        let big = RiskTable::from_values(q.clone(), vec![1000.0, 999.0, 1001.0], 0).unwrap();
        let g = gibbs_posterior(&q, &big, 1e-6).unwrap();
        assert_eq!(g.probs(), &[0.0, 1.0, 0.0]);
        assert!(g.log_probs().iter().all(|v| v.is_finite()));
        assert!(matches!(gibbs_posterior(&q, &r, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(gibbs_posterior(&q, &r, f64::NAN), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_mass_atoms_get_zero_probability() {
        let q = Arc::new(AtomizedMeasure::indexed(&[0.0, 0.5, 0.5], MeasureKind::Probability).unwrap());
        let r = RiskTable::from_values(q.clone(), vec![0.0, 1.0, 2.0], 0).unwrap();
        for lambda in [1e-3, 1.0, 1e3] {
            let g = gibbs_posterior(&q, &r, lambda).unwrap();
            assert_eq!(g.probs()[0], 0.0);
            assert_eq!(g.log_probs()[0], f64::NEG_INFINITY);
            assert!(g.log_probs()[1].is_finite() && g.log_probs()[2].is_finite());
            assert!(g.probs()[1] > 0.0);
        }
    }

    #[test]
    fn expected_risk_examples() {
        let (q, r) = t3();
        let u = MeasureOnAtoms::normalized_reference(q.clone());
        assert!((expected_risk(&u, &r).unwrap() - 1.0).abs() < 1e-15);
        let g = gibbs_posterior(&q, &r, 1.0).unwrap();
        let o = oracle_probs(1.0);
        let oracle = o[1] + 2.0 * o[2];
        let e = expected_risk(&g, &r).unwrap();
        assert!((e - oracle).abs() < 1e-15);
        assert!((e - 0.42479).abs() < 1e-5);
        let point = MeasureOnAtoms::point_mass(q.clone(), 0).unwrap();
        assert_eq!(expected_risk(&point, &r).unwrap(), 0.0);
        let other = Arc::new(AtomizedMeasure::uniform(3).unwrap());
        let foreign = RiskTable::from_values(
            Arc::new(AtomizedMeasure::indexed(&[1.0, 1.0, 2.0], MeasureKind::Counting).unwrap()),
            vec![0.0, 0.0, 0.0],
            0,
        )
        .unwrap();
        assert_eq!(
            expected_risk(&MeasureOnAtoms::normalized_reference(other), &foreign),
            Err(Error::BaseMismatch)
        );
    }

    #[test]
    fn cumulant_examples() {
        let (q, r) = t3();
        let g = gibbs_posterior(&q, &r, 1.0).unwrap();
        let o = oracle_probs(1.0);
        let m1 = o[1] + 2.0 * o[2];
        let m2 = o[1] + 4.0 * o[2];
        assert!((cumulant(&g, 1).unwrap() - m1).abs() < 1e-15);
        assert!((cumulant(&g, 1).unwrap() - 0.42479).abs() < 1e-5);
        let var = cumulant(&g, 2).unwrap();
        assert!((var - (m2 - m1 * m1)).abs() < 1e-14);
        assert!((var - 0.42440).abs() < 1e-5);
        let flat = RiskTable::from_values(q.clone(), vec![2.0, 2.0, 2.0], 0).unwrap();
        let gf = gibbs_posterior(&q, &flat, 1.0).unwrap();
        assert_eq!(cumulant(&gf, 2).unwrap(), 0.0);
        assert!(cumulant(&g, 4).is_err());
    }

    #[test]
    fn objective_examples() {
        let (q, r) = t3();
        let g = gibbs_posterior(&q, &r, 1.0).unwrap();
        let at_gibbs = erm_rer_objective(&g.to_measure(), &q, &r, 1.0).unwrap();
        assert!((at_gibbs - 0.691007).abs() < 1e-6);
        assert!((at_gibbs + log_partition(&q, &r, -1.0).unwrap()).abs() < 1e-12);
        let u = MeasureOnAtoms::normalized_reference(q.clone());
        let at_u = erm_rer_objective(&u, &q, &r, 1.0).unwrap();
        assert!((at_u - 1.0).abs() < 1e-15);
        assert!(at_u > at_gibbs);

        let q0 = Arc::new(AtomizedMeasure::indexed(&[0.0, 0.5, 0.5], MeasureKind::Probability).unwrap());
        let r0 = RiskTable::from_values(q0.clone(), vec![0.0, 1.0, 2.0], 0).unwrap();
        let outside = MeasureOnAtoms::point_mass(q0.clone(), 0).unwrap();
        assert_eq!(erm_rer_objective(&outside, &q0, &r0, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn sampling_is_deterministic_and_calibrated() {
        let (q, r) = t3();
        let g = gibbs_posterior(&q, &r, 1.0).unwrap();
        let a = sample(&g, 42, 1_000_000).unwrap();
        let b = sample(&g, 42, 1_000_000).unwrap();
        assert_eq!(a, b);
        let freq = a.iter().filter(|&&i| i == 0).count() as f64 / a.len() as f64;
        assert!((freq - 0.665).abs() <= 0.002, "freq {freq}");
        assert_ne!(sample(&g, 43, 100).unwrap(), a[..100].to_vec());

        let q1 = Arc::new(AtomizedMeasure::indexed(&[0.0, 1.0, 0.0], MeasureKind::Probability).unwrap());
        let r1 = RiskTable::from_values(q1.clone(), vec![0.0, 1.0, 2.0], 0).unwrap();
        let g1 = gibbs_posterior(&q1, &r1, 1.0).unwrap();
        assert!(sample(&g1, 7, 1000).unwrap().iter().all(|&i| i == 1));
        assert!(sample(&g1, 7, 0).is_err());
    }

    #[test]
    fn relative_entropy_to_gibbs_paths_agree() {
        let (q, r) = t3();
        let g1 = gibbs_posterior(&q, &r, 1.0).unwrap();
        let g2 = gibbs_posterior(&q, &r, 0.5).unwrap();
        let via_probs = g1.relative_entropy_from(g2.probs());
        let via_logs = g2.relative_entropy_to(&g1).unwrap();
        assert!((via_probs - via_logs).abs() < 1e-14);
        assert_eq!(g1.relative_entropy_from(g1.probs()), 0.0);
        assert_eq!(g1.relative_entropy_to(&g1).unwrap(), 0.0);
    }
}
