#![allow(dead_code)]

use std::sync::Arc;

use ermrer::{AtomizedMeasure, MeasureKind, MeasureOnAtoms, RiskTable};
use proptest::prelude::*;

/// A reference measure together with a risk table on its atoms.
#[derive(Debug, Clone)]
pub struct Instance {
    pub q: Arc<AtomizedMeasure>,
    pub risks: RiskTable,
}

impl Instance {
    pub fn new(masses: &[f64], risks: Vec<f64>, kind: MeasureKind) -> Self {
        let q = Arc::new(AtomizedMeasure::indexed(masses, kind).unwrap());
        let risks = RiskTable::from_values(q.clone(), risks, 0).unwrap();
        Self { q, risks }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }
}

/// Counting-style reference (positive, unnormalized masses) with risks in
/// `[0, max_risk]`.
pub fn instance(atoms: std::ops::RangeInclusive<usize>, max_risk: f64) -> impl Strategy<Value = Instance> {
    atoms
        .prop_flat_map(move |n| {
            (
                prop::collection::vec(0.05f64..2.0, n),
                prop::collection::vec(0.0f64..=max_risk, n),
            )
        })
        .prop_map(|(masses, risks)| Instance::new(&masses, risks, MeasureKind::Counting))
}

/// `λ = 10^e` with `e` uniform in `[lo, hi]`.
pub fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo..=hi).prop_map(|e| 10f64.powf(e))
}

/// Flat Dirichlet weights from uniforms: normalized `-ln u`.
pub fn dirichlet(u: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = u.iter().map(|&x| -(x.max(1e-300)).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn uniforms(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n)
}

/// Gibbs probabilities by direct summation, with a shift by the minimum
/// risk so the exponentials stay in range.
pub fn gibbs_oracle(masses: &[f64], risks: &[f64], lambda: f64) -> Vec<f64> {
    let r0 = risks.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = masses
        .iter()
        .zip(risks)
        .map(|(&m, &r)| m * (-(r - r0) / lambda).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn measure(inst: &Instance, weights: Vec<f64>) -> MeasureOnAtoms {
    MeasureOnAtoms::normalized(inst.q.clone(), weights).unwrap()
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
