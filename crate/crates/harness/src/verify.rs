//! The `verify` subcommand: named checks over the configured instance and
//! over seeded random corpora.

use std::sync::Arc;

use ermrer::{
    check_delta_eps, classify_reference, constrained_min, cumulant, delta_star, erm_rer_objective, expected_risk,
    find_lambda_with, gibbs_posterior, log_partition, sublevel_probability, verify_expected_sensitivity_bounds,
    certify_bound, lautum_information, AtomizedMeasure, BoundConstant, EnsembleMode, GammaGrid, LambdaSearch,
    LambdaSearchConfig, MeasureOnAtoms, RiskTable,
};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::{deviations, gibbs_cell, Context};
use crate::config::VerifyConfig;
use crate::corpus::{self, Instance};
use crate::error::Result;
use crate::output::{csv_bytes, flag, json_bytes, RunDir};

pub const CHECKS: &[&str] = &[
    "gibbs_normalization",
    "gibbs_optimality",
    "free_energy",
    "cumulants",
    "monotone_concentration",
    "lambda_search",
    "noncoherent_reference",
    "sensitivity_bound",
    "kl_radius",
    "constrained_min",
    "lautum_bound",
    "determinism",
];

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    /// First failure, if any.
    pub detail: String,
}

/// Counts cases and keeps the first failure message.
#[derive(Debug, Default)]
struct Tally {
    cases: usize,
    failures: usize,
    detail: String,
}

impl Tally {
    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            if self.failures == 0 {
                self.detail = detail();
            }
            self.failures += 1;
        }
    }

    fn error(&mut self, e: impl std::fmt::Display) {
        self.record(false, || format!("error: {e}"));
    }

    fn merge(&mut self, other: Tally) {
        if self.failures == 0 && other.failures > 0 {
            self.detail = other.detail;
        }
        self.cases += other.cases;
        self.failures += other.failures;
    }

    fn finish(self, name: &str) -> CheckResult {
        CheckResult {
            name: name.to_string(),
            passed: self.failures == 0,
            cases: self.cases,
            failures: self.failures,
            detail: self.detail,
        }
    }
}

/// Runs `f` on `count` seeded random cases in parallel; case `i` uses
/// stream `i` of the check's seed, so results do not depend on threads.
fn corpus<F>(seed: u64, count: usize, f: F) -> Tally
where
    F: Fn(&mut rand_chacha::ChaCha8Rng, &mut Tally) + Sync,
{
    let parts: Vec<Tally> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = corpus::rng(seed, i as u64);
            let mut t = Tally::default();
            f(&mut rng, &mut t);
            t
        })
        .collect();
    let mut total = Tally::default();
    for p in parts {
        total.merge(p);
    }
    total
}

fn check_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a of the check name, so each check draws its own corpus.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    seed ^ h
}

pub fn run(ctx: &Context, dir: &mut RunDir) -> Result<(bool, Vec<String>)> {
    let vc = ctx.config.verify.clone().unwrap_or_default();
    let selected: Vec<&str> = match &vc.checks {
        Some(list) => CHECKS.iter().copied().filter(|c| list.iter().any(|l| l == c)).collect(),
        None => CHECKS.to_vec(),
    };
    let mut warnings = Vec::new();
    if selected.is_empty() {
        warnings.push("no verification checks selected; nothing to do".to_string());
    }
    let results: Vec<CheckResult> = selected.iter().map(|name| run_check(ctx, &vc, name)).collect();
    let passed = results.iter().all(|r| r.passed);

    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                flag(r.passed),
                r.cases.to_string(),
                r.failures.to_string(),
                r.detail.clone(),
            ]
        })
        .collect();
    dir.write(
        "verify.csv",
        &csv_bytes(&["check", "passed", "cases", "failures", "detail"], &rows)?,
    )?;
    let report = serde_json::json!({
        "passed": passed,
        "checks": results,
        "warnings": warnings,
    });
    dir.write("verify.json", &json_bytes(&report))?;
    Ok((passed, warnings))
}

pub fn run_check(ctx: &Context, vc: &VerifyConfig, name: &str) -> CheckResult {
    let seed = check_seed(ctx.seed.unwrap_or(0), name);
    let n = vc.instances;
    let tally = match name {
        "gibbs_normalization" => normalization(ctx, seed, n),
        "gibbs_optimality" => optimality(ctx, seed, n),
        "free_energy" => free_energy(ctx, seed, n),
        "cumulants" => cumulants(ctx, seed, n),
        "monotone_concentration" => concentration(ctx, seed, n),
        "lambda_search" => lambda_search(ctx, seed, n),
        "noncoherent_reference" => noncoherent(seed, n),
        "sensitivity_bound" => sensitivity_bound(ctx, vc, seed, n),
        "kl_radius" => kl_radius(seed, n),
        "constrained_min" => constrained(ctx, seed, n),
        "lautum_bound" => lautum(ctx, seed, n),
        "determinism" => determinism(ctx, seed),
        _ => unreachable!("check names are validated"),
    };
    tally.finish(name)
}

/// Every (risk table, λ) pair of the configured instance.
fn config_cells(ctx: &Context) -> Vec<(Arc<AtomizedMeasure>, RiskTable, f64)> {
    let p = &ctx.prepared;
    p.datasets
        .iter()
        .flat_map(|c| p.lambdas.iter().map(move |&l| (p.q.clone(), c.risks.clone(), l)))
        .collect()
}

fn for_cells<F>(ctx: &Context, f: F) -> Tally
where
    F: Fn(&Arc<AtomizedMeasure>, &RiskTable, f64, &mut Tally) + Sync,
{
    let mut t = Tally::default();
    for (q, r, l) in config_cells(ctx) {
        f(&q, &r, l, &mut t);
    }
    t
}

fn normalization_case(q: &Arc<AtomizedMeasure>, r: &RiskTable, lambda: f64, t: &mut Tally) {
    match gibbs_posterior(q, r, lambda) {
        Ok(g) => {
            let total: f64 = g.probs().iter().sum();
            t.record((total - 1.0).abs() <= 1e-10 && g.log_normalizer().is_finite(), || {
                format!("{} atoms, lambda {lambda}: total probability {total}", q.len())
            });
        }
        Err(e) => t.error(e),
    }
}

fn normalization(ctx: &Context, seed: u64, n: usize) -> Tally {
    let mut t = for_cells(ctx, normalization_case);
    t.merge(corpus(seed, n, |rng, t| {
        let inst = corpus::instance(rng, 2..=20_000, 1e3);
        let lambda = corpus::log_uniform(rng, -6.0, 6.0);
        normalization_case(&inst.q, &inst.risks, lambda, t);
    }));
    t
}

fn optimality_case<R: Rng>(rng: &mut R, q: &Arc<AtomizedMeasure>, r: &RiskTable, lambda: f64, t: &mut Tally) {
    let Ok(g) = gibbs_posterior(q, r, lambda) else {
        return t.error("gibbs_posterior failed");
    };
    let best = match erm_rer_objective(&g.to_measure(), q, r, lambda) {
        Ok(v) => v,
        Err(e) => return t.error(e),
    };
    for _ in 0..10 {
        let d = corpus::dirichlet(rng, q.len());
        let s: f64 = rng.random_range(0.0f64..1.0).powi(4);
        let w: Vec<f64> = g
            .probs()
            .iter()
            .zip(&d)
            .zip(q.masses())
            .map(|((&a, &b), &m)| if m > 0.0 { (1.0 - s) * a + s * b } else { 0.0 })
            .collect();
        let Ok(p) = MeasureOnAtoms::normalized(q.clone(), w) else {
            continue;
        };
        match erm_rer_objective(&p, q, r, lambda) {
            Ok(v) => t.record(v >= best - 1e-12, || format!("lambda {lambda}: perturbed objective {v} < Gibbs {best}")),
            Err(e) => t.error(e),
        }
    }
}

fn optimality(ctx: &Context, seed: u64, n: usize) -> Tally {
    let mut rng = corpus::rng(seed, u64::MAX);
    let mut t = Tally::default();
    for (q, r, l) in config_cells(ctx) {
        optimality_case(&mut rng, &q, &r, l, &mut t);
    }
    t.merge(corpus(seed, n, |rng, t| {
        let inst = corpus::instance(rng, 2..=50, 10.0);
        let lambda = corpus::log_uniform(rng, -2.0, 2.0);
        optimality_case(rng, &inst.q, &inst.risks, lambda, t);
    }));
    t
}

fn free_energy_case(q: &Arc<AtomizedMeasure>, r: &RiskTable, lambda: f64, t: &mut Tally) {
    let result = (|| -> ermrer::Result<(f64, f64)> {
        let g = gibbs_posterior(q, r, lambda)?;
        Ok((erm_rer_objective(&g.to_measure(), q, r, lambda)?, log_partition(q, r, -1.0 / lambda)?))
    })();
    match result {
        Ok((obj, k)) => t.record((obj + lambda * k).abs() <= 1e-9, || {
            format!("lambda {lambda}: objective {obj} vs -lambda K {}", -lambda * k)
        }),
        Err(e) => t.error(e),
    }
}

fn free_energy(ctx: &Context, seed: u64, n: usize) -> Tally {
    let mut t = for_cells(ctx, free_energy_case);
    t.merge(corpus(seed, n, |rng, t| {
        let inst = corpus::instance(rng, 2..=50, 10.0);
        let lambda = corpus::log_uniform(rng, -2.0, 2.0);
        free_energy_case(&inst.q, &inst.risks, lambda, t);
    }));
    t
}

/// Central differences of `K` at `t = -1/λ` with step `1e-5 max(1, |t|)`,
/// through `K(t ± h) - K(t) = log Σ g_i e^{±h r_i}` centered at the mean.
fn cumulants_case(q: &Arc<AtomizedMeasure>, r: &RiskTable, lambda: f64, t: &mut Tally) {
    let Ok(g) = gibbs_posterior(q, r, lambda) else {
        return t.error("gibbs_posterior failed");
    };
    let tt = -1.0 / lambda;
    let h = 1e-5 * tt.abs().max(1.0);
    let risks = r.risks();
    let c: f64 = g.probs().iter().zip(risks).map(|(a, b)| a * b).sum();
    let a = |s: f64| -> f64 {
        g.probs()
            .iter()
            .zip(risks)
            .map(|(p, ri)| p * (s * (ri - c)).exp_m1())
            .sum()
    };
    let (up, down) = (a(h).ln_1p(), a(-h).ln_1p());
    let d1 = c + (up - down) / (2.0 * h);
    let d2 = (up + down) / (h * h);
    let (Ok(c1), Ok(c2)) = (cumulant(&g, 1), cumulant(&g, 2)) else {
        return t.error("cumulant failed");
    };
    t.record(
        (d1 - c1).abs() <= 1e-5 * c1.abs() + 1e-300 && (d2 - c2).abs() <= 1e-5 * c2.abs() + 1e-300 && c2 >= 0.0,
        || format!("lambda {lambda}: K' {c1} vs {d1}, K'' {c2} vs {d2}"),
    );
}

fn cumulants(ctx: &Context, seed: u64, n: usize) -> Tally {
    let mut t = for_cells(ctx, cumulants_case);
    t.merge(corpus(seed, n, |rng, t| {
        let inst = corpus::instance(rng, 2..=50, 10.0);
        let lambda = corpus::log_uniform(rng, -2.0, 2.0);
        cumulants_case(&inst.q, &inst.risks, lambda, t);
    }));
    t
}

fn concentration_case(q: &Arc<AtomizedMeasure>, r: &RiskTable, delta: f64, t: &mut Tally) {
    let mut previous = 1.0;
    let mut ok = true;
    let mut where_ = 0.0;
    for i in 0..32 {
        let lambda = 10f64.powf(-3.0 + 6.0 * i as f64 / 31.0);
        let p = gibbs_posterior(q, r, lambda).and_then(|g| sublevel_probability(&g, r, delta));
        match p {
            Ok(p) => {
                if p > previous + 1e-12 {
                    ok = false;
                    where_ = lambda;
                }
                previous = p;
            }
            Err(e) => return t.error(e),
        }
    }
    t.record(ok, || format!("delta {delta}: sub-level probability rose at lambda {where_}"));
}

fn concentration(ctx: &Context, seed: u64, n: usize) -> Tally {
    let mut t = Tally::default();
    let p = &ctx.prepared;
    for cell in &p.datasets {
        let deltas: Vec<f64> = match &ctx.config.deltas {
            Some(d) => d.clone(),
            None => cell.risks.risks().to_vec(),
        };
        for d in deltas {
            concentration_case(&p.q, &cell.risks, d, &mut t);
        }
    }
    t.merge(corpus(seed, n, |rng, t| {
        let inst = corpus::instance(rng, 2..=50, 10.0);
        let delta = rng.random_range(0.0..10.0);
        concentration_case(&inst.q, &inst.risks, delta, t);
    }));
    t
}

fn search_case(q: &Arc<AtomizedMeasure>, r: &RiskTable, delta: f64, epsilon: f64, tol: f64, t: &mut Tally) {
    let config = LambdaSearchConfig {
        tol,
        ..LambdaSearchConfig::default()
    };
    let ds = match delta_star(q, r) {
        Ok(d) => d,
        Err(e) => return t.error(e),
    };
    match find_lambda_with(q, r, delta, epsilon, &config) {
        Ok(LambdaSearch::Found(rep)) => {
            let ok = gibbs_posterior(q, r, rep.lambda)
                .and_then(|g| check_delta_eps(&g, r, delta, epsilon))
                .map(|c| c.achieved)
                .unwrap_or(false);
            t.record(ok && delta >= ds, || {
                format!("delta {delta}, epsilon {epsilon}: lambda {} does not certify", rep.lambda)
            });
        }
        Ok(LambdaSearch::NotAchievable { .. }) => {
            t.record(delta < ds, || format!("delta {delta} >= delta* {ds} reported not achievable"))
        }
        Err(e) => t.error(format!("delta {delta}, epsilon {epsilon}: {e}")),
    }
}

fn lambda_search(ctx: &Context, seed: u64, n: usize) -> Tally {
    let mut t = Tally::default();
    let p = &ctx.prepared;
    if let (Some(ds), Some(es)) = (&ctx.config.deltas, &ctx.config.epsilons) {
        for cell in &p.datasets {
            for &d in ds {
                for &e in es {
                    search_case(&p.q, &cell.risks, d, e, ctx.config.lambda_tol, &mut t);
                }
            }
        }
    }
    t.merge(corpus(seed, n, |rng, t| {
        let inst = corpus::coherent_instance(rng, 2..=50, 10.0);
        let max = inst.risks.risks().iter().cloned().fold(0.0, f64::max);
        let delta = rng.random_range(0.0..1.0) * if max > 0.0 { max } else { 1.0 };
        let epsilon = rng.random_range(0.05..0.95);
        match classify_reference(&inst.q, &inst.risks) {
            Ok(c) if c.coherent && c.consistent => {}
            _ => return t.record(false, || "corpus instance is not coherent and consistent".into()),
        }
        search_case(&inst.q, &inst.risks, delta.max(1e-9), epsilon, 1e-4, t);
    }));
    t
}

fn noncoherent_case(inst: &Instance, t: &mut Tally) {
    let q = &inst.q;
    let r = &inst.risks;
    let expected = q
        .masses()
        .iter()
        .zip(r.risks())
        .filter(|(&m, _)| m > 0.0)
        .map(|(_, &x)| x)
        .fold(f64::INFINITY, f64::min);
    let ds = delta_star(q, r).unwrap_or(f64::NAN);
    t.record(ds == expected, || format!("delta* {ds}, expected {expected}"));
    for lambda in [1e-3, 1.0, 1e3] {
        let zero = gibbs_posterior(q, r, lambda)
            .map(|g| g.probs().iter().zip(q.masses()).all(|(&p, &m)| m > 0.0 || p == 0.0))
            .unwrap_or(false);
        t.record(zero, || format!("lambda {lambda}: zero-mass atom got probability"));
    }
    let below = ds / 2.0;
    let search = find_lambda_with(q, r, below, 0.5, &LambdaSearchConfig::default());
    t.record(matches!(search, Ok(LambdaSearch::NotAchievable { .. })), || {
        format!("delta {below} < delta* {ds} was not reported as not achievable: {search:?}")
    });
}

fn noncoherent(seed: u64, n: usize) -> Tally {
    let mut t = Tally::default();
    noncoherent_case(
        &Instance::new(&[0.0, 0.5, 0.5], vec![0.0, 1.0, 2.0], ermrer::MeasureKind::Probability),
        &mut t,
    );
    t.merge(corpus(seed, n, |rng, t| {
        let inst = corpus::noncoherent_instance(rng, 3..=30);
        noncoherent_case(&inst, t);
    }));
    t
}

/// Variance constant used by the sensitivity check.
#[derive(Debug, Clone, Copy)]
enum Constant {
    Grid,
    Popoviciu,
    /// Replaces the constant outright, e.g. 0 as a negative control.
    Forced(f64),
}

fn bound_case(
    q: &Arc<AtomizedMeasure>,
    r: &RiskTable,
    lambda: f64,
    p: &MeasureOnAtoms,
    grid: &GammaGrid,
    constant: Constant,
    t: &mut Tally,
) {
    match certify_bound(q, r, lambda, p, grid) {
        Ok(rep) => {
            let b2 = match constant {
                Constant::Grid => rep.b_squared,
                Constant::Popoviciu => rep.b_squared_popoviciu,
                Constant::Forced(b) => b,
            };
            let bound = (2.0 * b2 * rep.kl_to_gibbs.max(0.0)).sqrt();
            let holds = rep.sensitivity.abs() <= bound + ermrer::sensitivity::BOUND_SLACK;
            t.record(holds, || {
                format!(
                    "lambda {lambda}: |S| = {} exceeds sqrt(2 B^2 D) = {bound} with B^2 = {b2}",
                    rep.sensitivity.abs()
                )
            });
        }
        Err(e) => t.error(e),
    }
}

fn sensitivity_bound(ctx: &Context, vc: &VerifyConfig, seed: u64, n: usize) -> Tally {
    let constant = match (vc.force_b_squared, ctx.config.certified_popoviciu) {
        (Some(b), _) => Constant::Forced(b),
        (None, true) => Constant::Popoviciu,
        (None, false) => Constant::Grid,
    };
    let p = &ctx.prepared;
    let mut t = Tally::default();
    let devs = match ctx.config.deviations {
        Some(_) => match deviations(ctx) {
            Ok(d) => d.into_iter().map(|d| d.measure).collect(),
            Err(e) => {
                t.error(e);
                Vec::new()
            }
        },
        None => vec![MeasureOnAtoms::normalized_reference(p.q.clone())],
    };
    for cell in &p.datasets {
        for &lambda in &p.lambdas {
            for dev in &devs {
                bound_case(&p.q, &cell.risks, lambda, dev, &p.gamma_grid, constant, &mut t);
            }
        }
    }
    let grid = p.gamma_grid;
    t.merge(corpus(seed, n, |rng, t| {
        let inst = corpus::instance(rng, 2..=50, 10.0);
        let lambda = corpus::log_uniform(rng, -2.0, 2.0);
        let w = corpus::dirichlet(rng, inst.len());
        let dev = MeasureOnAtoms::normalized(inst.q.clone(), w).expect("dirichlet weights");
        bound_case(&inst.q, &inst.risks, lambda, &dev, &grid, constant, t);
    }));
    t
}

fn kl_radius(seed: u64, n: usize) -> Tally {
    corpus(seed, n, |rng, t| {
        let inst = corpus::instance(rng, 2..=50, 10.0);
        let lambda = corpus::log_uniform(rng, -1.0, 2.0);
        let Ok(g_lambda) = gibbs_posterior(&inst.q, &inst.risks, lambda) else {
            return t.error("gibbs_posterior failed");
        };
        let mut previous = f64::INFINITY;
        let mut ok = true;
        for i in 1..=24 {
            let omega = lambda * i as f64 / 24.0;
            let d = gibbs_posterior(&inst.q, &inst.risks, omega)
                .and_then(|g| g.relative_entropy_to(&g_lambda))
                .unwrap_or(f64::NAN);
            ok &= d <= previous + 1e-12;
            previous = d;
        }
        t.record(ok && previous.abs() <= 1e-15, || {
            format!("lambda {lambda}: KL radius not monotone or nonzero at omega = lambda")
        });
    })
}

fn constrained_case<R: Rng>(rng: &mut R, q: &Arc<AtomizedMeasure>, r: &RiskTable, lambda: f64, c: f64, tol: f64, t: &mut Tally) {
    let sol = match constrained_min(q, r, lambda, c, tol) {
        Ok(s) => s,
        Err(e) => return t.error(format!("lambda {lambda}, c {c}: {e}")),
    };
    let Ok(g) = gibbs_posterior(q, r, lambda) else {
        return t.error("gibbs_posterior failed");
    };
    t.record(sol.kl <= c + tol, || format!("lambda {lambda}, c {c}: radius {} exceeds c", sol.kl));
    for _ in 0..32 {
        let d = corpus::dirichlet(rng, q.len());
        let s: f64 = rng.random_range(0.0..1.0);
        let w: Vec<f64> = g
            .probs()
            .iter()
            .zip(&d)
            .zip(q.masses())
            .map(|((&a, &b), &m)| if m > 0.0 { (1.0 - s) * a + s * b } else { 0.0 })
            .collect();
        if g.relative_entropy_from(&w) > c {
            continue;
        }
        let Ok(p) = MeasureOnAtoms::normalized(q.clone(), w) else {
            continue;
        };
        let risk = expected_risk(&p, r).unwrap_or(f64::NAN);
        t.record(sol.expected_risk <= risk + 1e-9, || {
            format!("lambda {lambda}, c {c}: minimizer risk {} above feasible probe {risk}", sol.expected_risk)
        });
    }
}

fn constrained(ctx: &Context, seed: u64, n: usize) -> Tally {
    let mut t = Tally::default();
    let p = &ctx.prepared;
    let tol = ctx.config.constraint_tol;
    if let Some(cs) = &ctx.config.c_values {
        let mut rng = corpus::rng(seed, u64::MAX);
        for cell in &p.datasets {
            for &lambda in &p.lambdas {
                for &c in cs {
                    constrained_case(&mut rng, &p.q, &cell.risks, lambda, c, tol, &mut t);
                }
            }
        }
    }
    t.merge(corpus(seed, n, |rng, t| {
        // Round trip: radius of a known ω, then recover ω from it.
        let inst = corpus::instance(rng, 2..=12, 5.0);
        let lambda = corpus::log_uniform(rng, -0.5, 1.0);
        let omega = lambda * rng.random_range(0.2..0.9);
        let c = gibbs_posterior(&inst.q, &inst.risks, omega)
            .and_then(|g| gibbs_posterior(&inst.q, &inst.risks, lambda).and_then(|gl| g.relative_entropy_to(&gl)));
        let c = match c {
            Ok(c) if c > 1e-6 => c,
            Ok(_) => return,
            Err(e) => return t.error(e),
        };
        match constrained_min(&inst.q, &inst.risks, lambda, c, 1e-8) {
            Ok(s) => t.record(!s.saturated && ((s.omega - omega) / omega).abs() <= 1e-3, || {
                format!("lambda {lambda}: recovered omega {} for {omega}", s.omega)
            }),
            Err(e) => t.error(e),
        }
        constrained_case(rng, &inst.q, &inst.risks, lambda, c, 1e-8, t);
    }));
    t
}

fn lautum(ctx: &Context, seed: u64, n: usize) -> Tally {
    let mut t = Tally::default();
    let p = &ctx.prepared;
    let constant = if ctx.config.certified_popoviciu {
        BoundConstant::Popoviciu
    } else {
        BoundConstant::GridSup
    };
    if let Some(e) = &p.ensemble {
        for &lambda in &p.lambdas {
            match ermrer::dataset_dist::verify_on_ensemble(e, &p.q, lambda, &p.gamma_grid, constant) {
                Ok(r) => t.record(r.lautum >= 0.0 && r.holds && r.holds_per_dataset, || format!("{r:?}")),
                Err(err) => t.error(err),
            }
        }
    }
    let grid = p.gamma_grid;
    t.merge(corpus(seed, n, |rng, t| {
        let law = corpus::small_law(rng);
        let lambda = corpus::log_uniform(rng, -1.0, 1.0);
        let exact = EnsembleMode::ExactEnumeration;
        match lautum_information(&law.problem, &law.q, &law.law, lambda, exact) {
            Ok(l) => t.record(l.value >= 0.0, || format!("negative lautum {}", l.value)),
            Err(e) => return t.error(e),
        }
        match verify_expected_sensitivity_bounds(&law.problem, &law.q, &law.law, lambda, &grid, exact, constant) {
            Ok(r) => t.record(r.holds && r.holds_per_dataset, || format!("{r:?}")),
            Err(e) => t.error(e),
        }
    }));
    t
}

fn determinism(ctx: &Context, seed: u64) -> Tally {
    let mut t = Tally::default();
    let p = &ctx.prepared;
    if let (Some(cell), Some(&lambda)) = (p.datasets.first(), p.lambdas.first()) {
        let a = gibbs_cell(&p.q, cell, 0, lambda);
        let b = gibbs_cell(&p.q, cell, 0, lambda);
        match (a, b) {
            (Ok(a), Ok(b)) => t.record(a.1 == b.1 && a.2 == b.2, || "posterior dump differs between runs".into()),
            _ => t.error("posterior dump failed"),
        }
    }
    let draw = |s| {
        let mut rng = corpus::rng(s, 0);
        let inst = corpus::instance(&mut rng, 2..=50, 10.0);
        (inst.risks.risks().to_vec(), inst.q.masses().to_vec())
    };
    t.record(draw(seed) == draw(seed), || "corpus generation is not reproducible".into());
    t
}
