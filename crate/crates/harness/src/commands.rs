//! The subcommands. Each one computes a table of results, writes it into
//! `<out>/<subcommand>/`, and finishes with `manifest.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ermrer::dataset_dist::verify_on_ensemble;
use ermrer::{
    certify_bound, constrained_min, cumulant, erm_rer_objective, find_lambda_with, gibbs_posterior,
    AtomizedMeasure, BoundConstant, EnsembleMode, LambdaSearch, LambdaSearchConfig,
    MeasureKind, MeasureOnAtoms,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde_json::json;

use crate::build::{prepare, Cell, Prepared};
use crate::config::{DeviationConfig, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::output::{csv_bytes, flag, json_bytes, num, opt_num, write_manifest, RunDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Gibbs,
    LambdaSearch,
    Sensitivity,
    ConstrainedMin,
    Lautum,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gibbs => "gibbs",
            Command::LambdaSearch => "lambda-search",
            Command::Sensitivity => "sensitivity",
            Command::ConstrainedMin => "constrained-min",
            Command::Lautum => "lautum",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    /// Replaces `output_dir` from the config.
    pub out: Option<PathBuf>,
    /// Replaces `seed` from the config.
    pub seed: Option<u64>,
    /// Worker threads; rayon's default when absent.
    pub jobs: Option<usize>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// False when a verification check failed.
    pub passed: bool,
    pub warnings: Vec<String>,
}

/// Everything a subcommand needs: the validated config with overrides
/// applied and the prepared instance.
pub struct Context {
    pub config: ExperimentConfig,
    pub seed: Option<u64>,
    pub prepared: Prepared,
    pub config_dir: PathBuf,
}

pub fn load_context(opts: &RunOptions) -> Result<(Context, Vec<u8>)> {
    let (mut config, bytes) = ExperimentConfig::load(&opts.config)?;
    if opts.seed.is_some() {
        config.seed = opts.seed;
    }
    config.check()?;
    let config_dir = opts
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let prepared = prepare(&config, &config_dir, config.seed)?;
    Ok((
        Context {
            seed: config.seed,
            config,
            prepared,
            config_dir,
        },
        bytes,
    ))
}

pub fn run(command: Command, opts: &RunOptions) -> Result<RunOutcome> {
    let started = Instant::now();
    if opts.jobs == Some(0) {
        return Err(HarnessError::Config("--jobs must be at least 1".into()));
    }
    let (ctx, config_bytes) = load_context(opts)?;
    let root = opts.out.clone().unwrap_or_else(|| ctx.config.output_dir.clone());
    let mut dir = RunDir::create(root.join(command.name()))?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::Config(format!("--jobs: {e}")))?;

    let (passed, warnings) = pool.install(|| -> Result<(bool, Vec<String>)> {
        match command {
            Command::Gibbs => gibbs(&ctx, &mut dir).map(|_| (true, vec![])),
            Command::LambdaSearch => lambda_search(&ctx, &mut dir).map(|_| (true, vec![])),
            Command::Sensitivity => sensitivity(&ctx, &mut dir).map(|_| (true, vec![])),
            Command::ConstrainedMin => constrained(&ctx, &mut dir).map(|_| (true, vec![])),
            Command::Lautum => lautum(&ctx, &mut dir).map(|_| (true, vec![])),
            Command::Verify => crate::verify::run(&ctx, &mut dir),
        }
    })?;

    let manifest = write_manifest(&dir, command.name(), &opts.config, &config_bytes, ctx.seed, started)?;
    let mut files: Vec<PathBuf> = dir.files().collect();
    files.push(manifest);
    Ok(RunOutcome {
        dir: dir.path.clone(),
        files,
        passed,
        warnings,
    })
}

fn required<'a>(values: &'a Option<Vec<f64>>, field: &str, command: &str) -> Result<&'a [f64]> {
    values
        .as_deref()
        .ok_or_else(|| HarnessError::Config(format!("{field}: required by {command}")))
}

/// One posterior dump: file name, CSV bytes, summary record.
pub fn gibbs_cell(q: &std::sync::Arc<AtomizedMeasure>, cell: &Cell, li: usize, lambda: f64) -> Result<(String, Vec<u8>, serde_json::Value)> {
    let g = gibbs_posterior(q, &cell.risks, lambda)?;
    let d = q.dim();
    let mut header: Vec<String> = vec!["atom_id".into()];
    header.extend((0..d).map(|k| format!("location_{k}")));
    header.extend(["mass".into(), "risk".into(), "prob".into()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = (0..q.len())
        .map(|i| {
            let mut row = vec![i.to_string()];
            row.extend(q.location(i).iter().map(|&x| num(x)));
            row.extend([num(q.mass(i)), num(cell.risks.risks()[i]), num(g.probs()[i])]);
            row
        })
        .collect();
    let name = format!("posterior_z{:04}_l{:03}.csv", cell.id, li);
    let objective = erm_rer_objective(&g.to_measure(), q, &cell.risks, lambda)?;
    let summary = json!({
        "dataset": cell.id,
        "dataset_weight": cell.weight,
        "lambda_index": li,
        "lambda": lambda,
        "file": name,
        "log_partition": g.log_normalizer(),
        "cumulant_1": cumulant(&g, 1)?,
        "cumulant_2": cumulant(&g, 2)?,
        "cumulant_3": cumulant(&g, 3)?,
        "objective": objective,
    });
    Ok((name, csv_bytes(&header, &rows)?, summary))
}

fn reference_summary(q: &AtomizedMeasure) -> serde_json::Value {
    json!({
        "atoms": q.len(),
        "dim": q.dim(),
        "total_mass": q.total_mass(),
        "kind": match q.kind() {
            MeasureKind::Probability => "probability",
            MeasureKind::Counting => "counting",
            MeasureKind::QuadratureTruncation => "quadrature_truncation",
        },
        "truncation_note": q.truncation_note(),
    })
}

fn cells_by_lambda(p: &Prepared) -> Vec<(&Cell, usize, f64)> {
    p.datasets
        .iter()
        .flat_map(|c| p.lambdas.iter().enumerate().map(move |(i, &l)| (c, i, l)))
        .collect()
}

fn gibbs(ctx: &Context, dir: &mut RunDir) -> Result<()> {
    let p = &ctx.prepared;
    let outputs: Vec<_> = cells_by_lambda(p)
        .par_iter()
        .map(|&(cell, li, lambda)| gibbs_cell(&p.q, cell, li, lambda))
        .collect::<Result<_>>()?;
    let mut summaries = Vec::with_capacity(outputs.len());
    for (name, bytes, summary) in outputs {
        dir.write(&name, &bytes)?;
        summaries.push(summary);
    }
    let summary = json!({
        "reference": reference_summary(&p.q),
        "cells": summaries,
    });
    dir.write("summary.json", &json_bytes(&summary))
}

fn lambda_search(ctx: &Context, dir: &mut RunDir) -> Result<()> {
    let deltas = required(&ctx.config.deltas, "deltas", "lambda-search")?;
    let epsilons = required(&ctx.config.epsilons, "epsilons", "lambda-search")?;
    let search = LambdaSearchConfig {
        tol: ctx.config.lambda_tol,
        ..LambdaSearchConfig::default()
    };
    let p = &ctx.prepared;
    let jobs: Vec<(&Cell, f64, f64)> = p
        .datasets
        .iter()
        .flat_map(|c| deltas.iter().flat_map(move |&d| epsilons.iter().map(move |&e| (c, d, e))))
        .collect();
    let rows: Vec<Vec<String>> = jobs
        .par_iter()
        .map(|&(cell, delta, epsilon)| -> Result<Vec<String>> {
            let echo = [cell.id.to_string(), num(delta), num(epsilon), num(search.tol)];
            let rest = match find_lambda_with(&p.q, &cell.risks, delta, epsilon, &search)? {
                LambdaSearch::Found(r) => vec![
                    "found".to_string(),
                    num(r.lambda),
                    num(r.sublevel_prob),
                    flag(r.achieved),
                    num(r.delta_star),
                    flag(r.coherent),
                    flag(r.consistent),
                    r.iterations.to_string(),
                    String::new(),
                ],
                LambdaSearch::NotAchievable {
                    delta_star,
                    limiting_probability,
                    ..
                } => {
                    let class = ermrer::classify_reference(&p.q, &cell.risks)?;
                    vec![
                        "not_achievable".to_string(),
                        String::new(),
                        String::new(),
                        flag(false),
                        num(delta_star),
                        flag(class.coherent),
                        flag(class.consistent),
                        "0".to_string(),
                        num(limiting_probability),
                    ]
                }
            };
            Ok(echo.into_iter().chain(rest).collect())
        })
        .collect::<Result<_>>()?;
    let header = [
        "dataset",
        "delta",
        "epsilon",
        "tol",
        "status",
        "lambda",
        "sublevel_prob",
        "achieved",
        "delta_star",
        "coherent",
        "consistent",
        "iterations",
        "limiting_probability",
    ];
    dir.write("lambda_search.csv", &csv_bytes(&header, &rows)?)
}

/// A named alternative measure for sensitivity runs.
pub struct Deviation {
    pub label: String,
    pub measure: MeasureOnAtoms,
}

pub fn deviations(ctx: &Context) -> Result<Vec<Deviation>> {
    let q = &ctx.prepared.q;
    let configs = ctx
        .config
        .deviations
        .as_ref()
        .ok_or_else(|| HarnessError::Config("deviations: required by sensitivity".into()))?;
    let positive: Vec<usize> = (0..q.len()).filter(|&i| q.mass(i) > 0.0).collect();
    let mut out = Vec::new();
    for (k, d) in configs.iter().enumerate() {
        let field = |m: String| HarnessError::Config(format!("deviations[{k}]: {m}"));
        match d {
            DeviationConfig::Reference => out.push(Deviation {
                label: "reference".into(),
                measure: MeasureOnAtoms::normalized_reference(q.clone()),
            }),
            DeviationConfig::Uniform => {
                let mut w = vec![0.0; q.len()];
                for &i in &positive {
                    w[i] = 1.0;
                }
                out.push(Deviation {
                    label: "uniform".into(),
                    measure: MeasureOnAtoms::normalized(q.clone(), w)?,
                })
            }
            DeviationConfig::PointMass { atom } => out.push(Deviation {
                label: format!("point_mass:{atom}"),
                measure: MeasureOnAtoms::point_mass(q.clone(), *atom).map_err(|e| field(e.to_string()))?,
            }),
            DeviationConfig::Weights { weights } => out.push(Deviation {
                label: format!("weights:{k}"),
                measure: MeasureOnAtoms::normalized(q.clone(), weights.clone()).map_err(|e| field(e.to_string()))?,
            }),
            DeviationConfig::Dirichlet { count } => {
                let seed = ctx.seed.ok_or_else(|| HarnessError::Config("seed: required by dirichlet deviations".into()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
                for j in 0..*count {
                    let mut w = vec![0.0; q.len()];
                    for &i in &positive {
                        w[i] = Exp1.sample(&mut rng);
                    }
                    out.push(Deviation {
                        label: format!("dirichlet:{k}:{j}"),
                        measure: MeasureOnAtoms::normalized(q.clone(), w)?,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn sensitivity(ctx: &Context, dir: &mut RunDir) -> Result<()> {
    let p = &ctx.prepared;
    let devs = deviations(ctx)?;
    let devs = &devs;
    let certified = ctx.config.certified_popoviciu;
    let jobs: Vec<(&Cell, f64, &Deviation)> = p
        .datasets
        .iter()
        .flat_map(|c| p.lambdas.iter().flat_map(move |&l| devs.iter().map(move |d| (c, l, d))))
        .collect();
    let rows: Vec<Vec<String>> = jobs
        .par_iter()
        .enumerate()
        .map(|(id, &(cell, lambda, dev))| -> Result<Vec<String>> {
            let r = certify_bound(&p.q, &cell.risks, lambda, &dev.measure, &p.gamma_grid)?;
            let (bound, holds) = if certified {
                (r.bound_popoviciu, r.holds_popoviciu)
            } else {
                (r.bound, r.holds)
            };
            Ok(vec![
                id.to_string(),
                cell.id.to_string(),
                num(lambda),
                dev.label.clone(),
                num(r.sensitivity),
                num(r.expected_risk),
                num(r.gibbs_risk),
                num(r.kl_to_gibbs),
                num(r.b_squared),
                num(r.b_squared_popoviciu),
                num(bound),
                flag(holds),
                flag(certified),
                num(r.bound),
                flag(r.holds),
                num(r.bound_popoviciu),
                flag(r.holds_popoviciu),
                flag(r.lower_holds),
                flag(r.upper_holds),
                flag(r.widened),
                num(r.gamma_grid.min),
                num(r.gamma_grid.max),
                r.gamma_grid.count.to_string(),
            ])
        })
        .collect::<Result<_>>()?;
    let header = [
        "instance_id",
        "dataset",
        "lambda",
        "deviation",
        "sensitivity",
        "expected_risk",
        "gibbs_risk",
        "kl",
        "b2_grid",
        "b2_popoviciu",
        "bound",
        "holds",
        "certified",
        "bound_grid",
        "holds_grid",
        "bound_popoviciu",
        "holds_popoviciu",
        "lower_holds",
        "upper_holds",
        "widened",
        "gamma_min",
        "gamma_max",
        "gamma_count",
    ];
    dir.write("sensitivity.csv", &csv_bytes(&header, &rows)?)
}

fn constrained(ctx: &Context, dir: &mut RunDir) -> Result<()> {
    let cs = required(&ctx.config.c_values, "c_values", "constrained-min")?;
    let tol = ctx.config.constraint_tol;
    let p = &ctx.prepared;
    let jobs: Vec<(&Cell, f64, f64)> = p
        .datasets
        .iter()
        .flat_map(|cell| p.lambdas.iter().flat_map(move |&l| cs.iter().map(move |&c| (cell, l, c))))
        .collect();
    let rows: Vec<Vec<String>> = jobs
        .par_iter()
        .map(|&(cell, lambda, c)| -> Result<Vec<String>> {
            let s = constrained_min(&p.q, &cell.risks, lambda, c, tol)?;
            Ok(vec![
                cell.id.to_string(),
                num(lambda),
                num(c),
                num(tol),
                num(s.omega),
                num(s.kl),
                num(s.expected_risk),
                flag(s.saturated),
                num(s.c_max),
                s.iterations.to_string(),
            ])
        })
        .collect::<Result<_>>()?;
    let header = [
        "dataset",
        "lambda",
        "c",
        "tol",
        "omega",
        "kl",
        "expected_risk",
        "saturated",
        "c_max",
        "iterations",
    ];
    dir.write("constrained_min.csv", &csv_bytes(&header, &rows)?)
}

fn lautum(ctx: &Context, dir: &mut RunDir) -> Result<()> {
    let p = &ctx.prepared;
    let ensemble = p
        .ensemble
        .as_ref()
        .ok_or_else(|| HarnessError::Config("dataset: lautum needs a `distribution` dataset source".into()))?;
    let constant = if ctx.config.certified_popoviciu {
        BoundConstant::Popoviciu
    } else {
        BoundConstant::GridSup
    };
    let rows: Vec<Vec<String>> = p
        .lambdas
        .par_iter()
        .map(|&lambda| -> Result<Vec<String>> {
            let r = verify_on_ensemble(ensemble, &p.q, lambda, &p.gamma_grid, constant)?;
            let (mode, samples, seed) = match r.mode {
                EnsembleMode::ExactEnumeration => ("exact", String::new(), String::new()),
                EnsembleMode::MonteCarlo { seed, samples } => ("monte_carlo", samples.to_string(), seed.to_string()),
            };
            Ok(vec![
                num(lambda),
                num(r.lautum),
                opt_num(r.lautum_std_error),
                num(r.b_squared_global),
                num(r.b_squared_global_sup),
                num(r.b_squared_global_popoviciu),
                match constant {
                    BoundConstant::GridSup => "grid".into(),
                    BoundConstant::Popoviciu => "popoviciu".into(),
                },
                num(r.lhs),
                num(r.rhs_per_dataset),
                num(r.rhs_lautum),
                flag(r.holds),
                flag(r.holds_per_dataset),
                mode.into(),
                samples,
                seed,
                r.datasets.to_string(),
                flag(r.truncated),
            ])
        })
        .collect::<Result<_>>()?;
    let header = [
        "lambda",
        "lautum",
        "lautum_std_error",
        "b2_global",
        "b2_global_grid",
        "b2_global_popoviciu",
        "constant",
        "lhs",
        "rhs_per_dataset",
        "rhs_lautum",
        "holds",
        "holds_per_dataset",
        "mode",
        "samples",
        "seed",
        "datasets",
        "truncated",
    ];
    dir.write("lautum.csv", &csv_bytes(&header, &rows)?)
}
