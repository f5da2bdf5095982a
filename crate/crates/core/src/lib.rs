//! Relative-entropy-regularized empirical risk minimization on atomized
//! reference measures.
//!
//! The reference measure is a finite list of weighted atoms, so every
//! integral against it is an exact finite sum. On top of that
//! representation the crate computes the Gibbs solution, its
//! log-partition function and cumulants, (δ, ε)-optimality certificates,
//! sensitivity bounds, KL-ball constrained minimizers, and the
//! dataset-averaged lautum-information bound.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled.
#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod dataset_dist;
pub mod error;
pub mod math;
pub mod measure;
pub mod optimality;
pub mod partition;
pub mod risk;
pub mod sensitivity;

pub use dataset_dist::{
    enumerate_datasets, global_b_squared, lautum_information, mixture_posterior,
    verify_expected_sensitivity_bounds, BoundConstant, DatasetDistribution, DatasetEnsemble, EnsembleMode,
    GlobalBSquared, LautumEstimate, LautumReport, SupportPoint,
};
pub use error::{Error, Result};
pub use measure::{
    atomize_density, make_discrete, relative_entropy, Atom, AtomizedMeasure, MeasureKind,
    MeasureOnAtoms,
};
pub use optimality::{
    check_delta_eps, classify_reference, delta_star, find_lambda, sublevel_probability,
    find_lambda_with, LambdaSearch, LambdaSearchConfig, OptimalityReport, ReferenceClass,
};
pub use partition::{
    cumulant, erm_rer_objective, expected_risk, finiteness_domain, gibbs_posterior,
    log_partition, sample, AtomProbabilities, FinitenessDomain, GibbsPosterior,
};
pub use risk::{empirical_risk, risk_table, DataPoint, Dataset, Loss, Predictor, Problem, ProblemSpec, RiskTable};
pub use sensitivity::{
    b_squared, certify_bound, constrained_min, sensitivity, BSquared, ConstrainedSolution,
    GammaGrid, SensitivityReport,
};
