//! Properties of the Gibbs solution, the log-partition function and its
//! cumulants on random atomized instances.

mod common;

use common::*;
use ermrer::{
    cumulant, erm_rer_objective, expected_risk, gibbs_posterior, log_partition, relative_entropy,
    make_discrete, MeasureKind, MeasureOnAtoms,
};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn probabilities_sum_to_one_across_the_lambda_range(
        n in 2usize..=100_000,
        seed in any::<u64>(),
        exponent in -6.0f64..=6.0,
    ) {
        // Cheap deterministic fill so large instances do not need large
        // shrinkable vectors.
        let mut state = seed | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let masses: Vec<f64> = (0..n).map(|_| 0.01 + next()).collect();
        let risks: Vec<f64> = (0..n).map(|_| 1e3 * next()).collect();
        let inst = Instance::new(&masses, risks, MeasureKind::Counting);
        let lambda = 10f64.powf(exponent);
        let g = gibbs_posterior(&inst.q, &inst.risks, lambda).unwrap();
        let total: f64 = g.probs().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-10, "total {total} at lambda {lambda}");
        prop_assert!(g.log_normalizer().is_finite());
        prop_assert!(g.log_probs().iter().all(|v| v.is_finite()));
    }
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn gibbs_minimizes_the_objective(
        (inst, perturbations) in instance(2..=50, 10.0)
            .prop_flat_map(|i| {
                let n = i.len();
                (Just(i), prop::collection::vec((uniforms(n), 0.0f64..1.0), 10))
            }),
        lambda in log_uniform(-2.0, 2.0),
    ) {
        let g = gibbs_posterior(&inst.q, &inst.risks, lambda).unwrap();
        let best = erm_rer_objective(&g.to_measure(), &inst.q, &inst.risks, lambda).unwrap();
        for (u, s) in perturbations {
            // Mixtures of the Gibbs solution with a Dirichlet draw, with the
            // mixing weight spread over several orders of magnitude.
            let d = dirichlet(&u);
            let s = s.powi(4);
            let w: Vec<f64> = g.probs().iter().zip(&d).map(|(&a, &b)| (1.0 - s) * a + s * b).collect();
            let tv = total_variation(&w, g.probs());
            let p = measure(&inst, w);
            let value = erm_rer_objective(&p, &inst.q, &inst.risks, lambda).unwrap();
            prop_assert!(value >= best - 1e-12, "objective {value} below Gibbs {best}");
            if tv > 1e-6 {
                prop_assert!(value > best, "tv {tv} but objective {value} not above {best}");
            }
        }
    }

    #[test]
    fn free_energy_identity(inst in instance(2..=50, 10.0), lambda in log_uniform(-2.0, 2.0)) {
        let g = gibbs_posterior(&inst.q, &inst.risks, lambda).unwrap();
        let objective = erm_rer_objective(&g.to_measure(), &inst.q, &inst.risks, lambda).unwrap();
        let k = log_partition(&inst.q, &inst.risks, -1.0 / lambda).unwrap();
        prop_assert!((objective + lambda * k).abs() <= 1e-9, "objective {objective}, -λK {}", -lambda * k);
    }

    #[test]
    fn probabilities_match_direct_summation(inst in instance(2..=50, 10.0), lambda in log_uniform(-2.0, 2.0)) {
        let g = gibbs_posterior(&inst.q, &inst.risks, lambda).unwrap();
        let oracle = gibbs_oracle(inst.q.masses(), inst.risks.risks(), lambda);
        for (a, b) in g.probs().iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn cumulants_match_finite_differences(inst in instance(2..=50, 10.0), lambda in log_uniform(-2.0, 2.0)) {
        let g = gibbs_posterior(&inst.q, &inst.risks, lambda).unwrap();
        let t = -1.0 / lambda;
        let h = 1e-5 * t.abs().max(1.0);
        // K(t ± h) - K(t) = log Σ_i g_i exp(±h r_i), with g the tilted
        // probabilities from direct summation. Centering the exponent at the
        // tilted mean c keeps the second difference free of cancellation.
        let w = gibbs_oracle(inst.q.masses(), inst.risks.risks(), lambda);
        let r = inst.risks.risks();
        let c: f64 = w.iter().zip(r).map(|(a, b)| a * b).sum();
        let a = |s: f64| -> f64 { w.iter().zip(r).map(|(wi, ri)| wi * (s * (ri - c)).exp_m1()).sum() };
        let (up, down) = (a(h).ln_1p(), a(-h).ln_1p());
        let d1 = c + (up - down) / (2.0 * h);
        let d2 = (up + down) / (h * h);
        let c1 = cumulant(&g, 1).unwrap();
        let c2 = cumulant(&g, 2).unwrap();
        prop_assert!((d1 - c1).abs() <= 1e-5 * c1.abs() + 1e-300, "K' {c1} vs {d1}");
        prop_assert!((d2 - c2).abs() <= 1e-5 * c2.abs() + 1e-300, "K'' {c2} vs {d2}");
    }

    #[test]
    fn log_partition_differences_match_cumulants(inst in instance(2..=50, 10.0), lambda in log_uniform(-2.0, 2.0)) {
        let g = gibbs_posterior(&inst.q, &inst.risks, lambda).unwrap();
        let t = -1.0 / lambda;
        let h = 1e-5 * t.abs().max(1.0);
        let k = |s: f64| log_partition(&inst.q, &inst.risks, s).unwrap();
        let (km, k0, kp) = (k(t - h), k(t), k(t + h));
        // Rounding in K itself grows with |t| max r (the exponent scale), and
        // bounds how finely a difference quotient of it can resolve a
        // derivative.
        let r_max = inst.risks.risks().iter().cloned().fold(0.0, f64::max);
        let noise = 8.0 * f64::EPSILON * (k0.abs().max(km.abs()).max(kp.abs()) + t.abs() * r_max);
        let d1 = (kp - km) / (2.0 * h);
        let d2 = (kp - 2.0 * k0 + km) / (h * h);
        let c1 = cumulant(&g, 1).unwrap();
        let c2 = cumulant(&g, 2).unwrap();
        prop_assert!((d1 - c1).abs() <= 1e-5 * c1.abs() + noise / h, "K' {c1} vs {d1}");
        prop_assert!((d2 - c2).abs() <= 1e-5 * c2.abs() + 4.0 * noise / (h * h), "K'' {c2} vs {d2}");
    }

    #[test]
    fn variance_is_nonnegative_and_third_cumulant_is_finite(
        inst in instance(2..=50, 10.0),
        lambda in log_uniform(-6.0, 6.0),
    ) {
        let g = gibbs_posterior(&inst.q, &inst.risks, lambda).unwrap();
        prop_assert!(cumulant(&g, 2).unwrap() >= 0.0);
        prop_assert!(cumulant(&g, 3).unwrap().is_finite());
        prop_assert_eq!(cumulant(&g, 1).unwrap(), expected_risk(&g, &inst.risks).unwrap());
    }

    #[test]
    fn gibbs_risk_is_nondecreasing_in_lambda(
        inst in instance(2..=50, 10.0),
        mut exponents in prop::collection::vec(-4.0f64..=4.0, 2..32),
    ) {
        exponents.sort_by(f64::total_cmp);
        let mut previous = f64::NEG_INFINITY;
        for e in exponents {
            let g = gibbs_posterior(&inst.q, &inst.risks, 10f64.powf(e)).unwrap();
            let mean = cumulant(&g, 1).unwrap();
            prop_assert!(mean >= previous - 1e-12, "mean {mean} after {previous}");
            previous = mean;
        }
    }

    #[test]
    fn relative_entropy_is_nonnegative_and_vanishes_on_equal_measures(
        (inst, u, v) in instance(2..=50, 1.0).prop_flat_map(|i| {
            let n = i.len();
            (Just(i), uniforms(n), uniforms(n))
        }),
    ) {
        let p = measure(&inst, dirichlet(&u));
        let r = measure(&inst, dirichlet(&v));
        let d = relative_entropy(&p, &r).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(relative_entropy(&p, &p).unwrap(), 0.0);
        if d == 0.0 {
            prop_assert!(p.weights().iter().zip(r.weights()).all(|(a, b)| (a - b).abs() <= 1e-12));
        }
    }

    #[test]
    fn self_entropy_of_discrete_measures_is_exactly_zero(
        weights in prop::collection::vec(1e-6f64..1.0, 1..40),
    ) {
        let total: f64 = weights.iter().sum();
        let masses: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let locations: Vec<Vec<f64>> = (0..masses.len()).map(|i| vec![i as f64]).collect();
        let base = std::sync::Arc::new(make_discrete(&masses, &locations, MeasureKind::Probability).unwrap());
        let p = MeasureOnAtoms::reference(base);
        if p.is_normalized() {
            prop_assert_eq!(relative_entropy(&p, &p).unwrap(), 0.0);
        }
    }
}
