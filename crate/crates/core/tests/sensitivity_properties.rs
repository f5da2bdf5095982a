//! Sensitivity bounds and the KL-ball constrained minimizer.

mod common;

use std::sync::Arc;

use common::*;
use ermrer::{
    b_squared, certify_bound, constrained_min, expected_risk, gibbs_posterior, sensitivity, AtomizedMeasure,
    GammaGrid, MeasureKind, MeasureOnAtoms, RiskTable,
};
use proptest::prelude::*;

fn bound_case() -> impl Strategy<Value = (Instance, Vec<f64>, f64)> {
    (instance(2..=50, 10.0), log_uniform(-2.0, 2.0))
        .prop_flat_map(|(i, lambda)| {
            let n = i.len();
            (Just(i), uniforms(n), Just(lambda))
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn range_bound_always_holds((inst, u, lambda) in bound_case()) {
        let p = measure(&inst, dirichlet(&u));
        let rep = certify_bound(&inst.q, &inst.risks, lambda, &p, &GammaGrid::default()).unwrap();
        prop_assert!(rep.holds_popoviciu, "{rep:?}");
    }

    #[test]
    fn lower_side_holds_with_the_grid_supremum((inst, u, lambda) in bound_case()) {
        let p = measure(&inst, dirichlet(&u));
        let rep = certify_bound(&inst.q, &inst.risks, lambda, &p, &GammaGrid::default()).unwrap();
        prop_assert!(rep.lower_holds, "{rep:?}");
        prop_assert_eq!(rep.holds, rep.lower_holds && rep.upper_holds);
        prop_assert!(rep.b_squared >= 0.0 && rep.b_squared <= rep.b_squared_popoviciu + 1e-12);
    }

    #[test]
    fn sensitivity_is_the_risk_difference((inst, u, lambda) in bound_case()) {
        let p = measure(&inst, dirichlet(&u));
        let g = gibbs_posterior(&inst.q, &inst.risks, lambda).unwrap();
        let s = sensitivity(&inst.q, &inst.risks, lambda, &p).unwrap();
        let back = expected_risk(&g, &inst.risks).unwrap() - expected_risk(&p, &inst.risks).unwrap();
        prop_assert_eq!(s + back, 0.0);
    }

    #[test]
    fn kl_radius_is_monotone_in_omega(
        inst in instance(2..=50, 10.0),
        lambda in log_uniform(-1.0, 2.0),
        mut fractions in prop::collection::vec(0.01f64..1.0, 2..24),
    ) {
        let g_lambda = gibbs_posterior(&inst.q, &inst.risks, lambda).unwrap();
        prop_assert_eq!(g_lambda.relative_entropy_to(&g_lambda).unwrap(), 0.0);
        fractions.sort_by(f64::total_cmp);
        fractions.push(1.0);
        let mut previous = f64::INFINITY;
        for f in fractions {
            let g = gibbs_posterior(&inst.q, &inst.risks, f * lambda).unwrap();
            let d = g.relative_entropy_to(&g_lambda).unwrap();
            prop_assert!(d <= previous + 1e-12, "radius rose from {previous} to {d}");
            previous = d;
        }
        prop_assert!(previous.abs() <= 1e-15);
    }

    #[test]
    fn constrained_minimizer_beats_feasible_probes(
        (inst, lambda, frac, probes) in (instance(2..=12, 5.0), log_uniform(-0.5, 1.0), 0.2f64..0.9)
            .prop_flat_map(|(i, lambda, frac)| {
                let n = i.len();
                (Just(i), Just(lambda), Just(frac), prop::collection::vec((uniforms(n), 0.0f64..1.0), 64))
            }),
    ) {
        let g_lambda = gibbs_posterior(&inst.q, &inst.risks, lambda).unwrap();
        let omega = frac * lambda;
        let c = gibbs_posterior(&inst.q, &inst.risks, omega).unwrap().relative_entropy_to(&g_lambda).unwrap();
        prop_assume!(c > 1e-6);
        let sol = constrained_min(&inst.q, &inst.risks, lambda, c, 1e-8).unwrap();
        prop_assert!(sol.kl <= c + 1e-8);
        for (u, s) in probes {
            let d = dirichlet(&u);
            let w: Vec<f64> = g_lambda.probs().iter().zip(&d).map(|(&a, &b)| (1.0 - s) * a + s * b).collect();
            if g_lambda.relative_entropy_from(&w) > c {
                continue;
            }
            let p = measure(&inst, w);
            let r = expected_risk(&p, &inst.risks).unwrap();
            prop_assert!(sol.expected_risk <= r + 1e-9, "minimizer risk {} above probe {r}", sol.expected_risk);
        }
    }
}

/// Fifty atoms of equal mass, one of them far worse than the rest: Gibbs
/// solutions at positive regularization never put much weight on the bad
/// atom, so the supremum of their variance stays small, while a point mass
/// on that atom moves the expected risk by almost the full range.
#[test]
fn upper_side_can_exceed_the_grid_supremum() {
    let q = Arc::new(AtomizedMeasure::uniform(50).unwrap());
    let mut values = vec![0.0; 50];
    values[49] = 10.0;
    let risks = RiskTable::from_values(q.clone(), values, 0).unwrap();
    let lambda = 100.0;

    // Direct oracle: under Gibbs(γ) the risk is 10 times a Bernoulli with
    // success probability a(γ) = e^{-10/γ} / (49 + e^{-10/γ}) < 1/50.
    let a = |gamma: f64| (-10.0 / gamma).exp() / (49.0 + (-10.0 / gamma).exp());
    let sup_oracle = 100.0 * a(f64::INFINITY) * (1.0 - a(f64::INFINITY));
    let g_bad = a(lambda);
    let s_oracle = 10.0 - 10.0 * g_bad;
    let kl_oracle = -g_bad.ln();

    let b2 = b_squared(&q, &risks, &GammaGrid::default()).unwrap();
    assert!((b2.sup - sup_oracle).abs() < 1e-12);
    assert_eq!(b2.popoviciu, 25.0);

    let p = MeasureOnAtoms::point_mass(q.clone(), 49).unwrap();
    let rep = certify_bound(&q, &risks, lambda, &p, &GammaGrid::default()).unwrap();
    assert!((rep.sensitivity - s_oracle).abs() < 1e-12);
    assert!((rep.kl_to_gibbs - kl_oracle).abs() < 1e-12);
    assert!(rep.bound < 0.5 * rep.sensitivity);
    assert!(rep.widened);
    assert!(rep.lower_holds);
    assert!(!rep.upper_holds && !rep.holds);
    assert!(rep.holds_popoviciu);
}

#[test]
fn saturated_radius_returns_the_minimal_risk_level_set() {
    let q = Arc::new(AtomizedMeasure::indexed(&[1.0, 2.0, 1.0, 3.0], MeasureKind::Counting).unwrap());
    let risks = RiskTable::from_values(q.clone(), vec![0.5, 0.5, 1.0, 2.0], 0).unwrap();
    let sol = constrained_min(&q, &risks, 1.0, 50.0, 1e-8).unwrap();
    assert!(sol.saturated);
    assert_eq!(sol.omega, 0.0);
    let w = sol.measure.weights();
    assert!((w[0] - 1.0 / 3.0).abs() < 1e-15 && (w[1] - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(sol.expected_risk, 0.5);
}
