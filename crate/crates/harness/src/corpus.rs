//! Seeded random instances for the verification suites.

use std::sync::Arc;

use ermrer::{
    make_discrete, AtomizedMeasure, DatasetDistribution, MeasureKind, ProblemSpec, RiskTable, SupportPoint,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// `10^u` with `u` uniform in `[lo, hi]`.
pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo..=hi))
}

/// Flat Dirichlet weights on `n` atoms.
pub fn dirichlet<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub q: Arc<AtomizedMeasure>,
    pub risks: RiskTable,
}

impl Instance {
    pub fn new(masses: &[f64], risks: Vec<f64>, kind: MeasureKind) -> Self {
        let q = Arc::new(AtomizedMeasure::indexed(masses, kind).expect("valid corpus masses"));
        let risks = RiskTable::from_values(q.clone(), risks, 0).expect("valid corpus risks");
        Self { q, risks }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }
}

/// Probability reference with Dirichlet masses and uniform risks in
/// `[0, max_risk]`.
pub fn instance<R: Rng>(rng: &mut R, atoms: std::ops::RangeInclusive<usize>, max_risk: f64) -> Instance {
    let n = rng.random_range(atoms);
    let masses = dirichlet(rng, n);
    let risks = (0..n).map(|_| rng.random_range(0.0..=max_risk)).collect();
    Instance::new(&masses, risks, MeasureKind::Probability)
}

/// Like [`instance`] but with risks on a 0.01 grid and one atom at risk 0,
/// so the reference is coherent and consistent and risk levels are well
/// separated.
pub fn coherent_instance<R: Rng>(rng: &mut R, atoms: std::ops::RangeInclusive<usize>, max_risk: f64) -> Instance {
    let n = rng.random_range(atoms);
    let masses = dirichlet(rng, n);
    let ticks = (max_risk * 100.0) as u32;
    let mut risks: Vec<f64> = (0..n).map(|_| rng.random_range(0..=ticks) as f64 / 100.0).collect();
    risks[rng.random_range(0..n)] = 0.0;
    Instance::new(&masses, risks, MeasureKind::Probability)
}

/// Reference whose minimal-risk atoms carry no mass, so `δ* > 0`.
pub fn noncoherent_instance<R: Rng>(rng: &mut R, atoms: std::ops::RangeInclusive<usize>) -> Instance {
    let n = rng.random_range(atoms).max(3);
    let zero_atoms = rng.random_range(1..n - 1);
    let mut risks: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
    let mut masses = dirichlet(rng, n);
    for i in 0..zero_atoms {
        risks[i] = rng.random_range(0.0..0.5);
        masses[i] = 0.0;
    }
    let total: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|m| *m /= total);
    Instance::new(&masses, risks, MeasureKind::Counting)
}

/// Small dataset laws: at most 4 support points on a 1-d integer grid, n up
/// to 4, at most 6 atoms, one of three problem families.
#[derive(Debug, Clone)]
pub struct SmallLaw {
    pub problem: ProblemSpec,
    pub q: Arc<AtomizedMeasure>,
    pub law: DatasetDistribution,
}

pub fn small_law<R: Rng>(rng: &mut R) -> SmallLaw {
    let family = rng.random_range(0..3);
    let problem = match family {
        0 => ProblemSpec::linear_squared(),
        1 => ProblemSpec::threshold_01(),
        _ => ProblemSpec::linear_01(),
    };
    let support_size = rng.random_range(1..=4);
    let weights = dirichlet(rng, support_size);
    let support: Vec<SupportPoint> = weights
        .iter()
        .map(|&p| {
            let x = rng.random_range(-2i32..=2) as f64;
            let y = if family == 0 {
                rng.random_range(-2i32..=2) as f64
            } else {
                rng.random_range(0..=1) as f64
            };
            SupportPoint::new(vec![x], y, p)
        })
        .collect();
    let n = rng.random_range(1..=4);
    let atoms = rng.random_range(1..=6);
    let mut thetas: Vec<i32> = (-8..=8).collect();
    for i in 0..atoms {
        let j = rng.random_range(i..thetas.len());
        thetas.swap(i, j);
    }
    let locations: Vec<Vec<f64>> = thetas[..atoms].iter().map(|&t| vec![t as f64 / 4.0]).collect();
    let masses: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.05..1.0)).collect();
    let q = Arc::new(make_discrete(&masses, &locations, MeasureKind::Counting).expect("distinct locations"));
    let law = DatasetDistribution::new(support, n, ermrer::dataset_dist::DEFAULT_ENUMERATION_BUDGET)
        .expect("normalized support");
    SmallLaw { problem, q, law }
}
