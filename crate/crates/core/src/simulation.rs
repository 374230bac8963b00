//! Simulation designs: named true priors, seeded coverage studies and oracle-pilot table rows.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibrator::{analyze_prepared, PipelineOptions, PreparedData};
use crate::error::{Error, Result};
use crate::functional::{eb_target_value, EbKind, EbTarget, LinearFunctional};
use crate::modulus::{AffineEstimator, ClassDiscretization, ModulusProblem};
use crate::pilot::PilotMarginal;
use crate::prior::{GaussianComponent, GaussianMixturePrior, Prior};
use crate::tuning::{tune_delta, Criterion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Scenario {
    Bimodal,
    Unimodal,
    Custom { components: Vec<GaussianComponent> },
}

impl Scenario {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "bimodal" => Ok(Scenario::Bimodal),
            "unimodal" => Ok(Scenario::Unimodal),
            other => Err(Error::InvalidInput(format!("unknown scenario '{other}' (expected bimodal or unimodal)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Bimodal => "bimodal",
            Scenario::Unimodal => "unimodal",
            Scenario::Custom { .. } => "custom",
        }
    }

    pub fn prior(&self) -> Result<GaussianMixturePrior> {
        let c = |weight, mean, sd| GaussianComponent { weight, mean, sd };
        match self {
            Scenario::Bimodal => GaussianMixturePrior::new(vec![c(0.5, -1.5, 0.2), c(0.5, 1.5, 0.2)]),
            Scenario::Unimodal => GaussianMixturePrior::new(vec![c(0.7, -0.2, 0.2), c(0.3, 0.0, 0.9)]),
            Scenario::Custom { components } => GaussianMixturePrior::new(components.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetGrid {
    pub kind: EbKind,
    pub xs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSpec {
    pub scenario: Scenario,
    pub m: usize,
    pub reps: usize,
    pub targets: Vec<TargetGrid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub kind: EbKind,
    pub x: f64,
    pub truth: f64,
    pub coverage: f64,
    pub mean_width: f64,
    pub rmse: f64,
    pub reps: usize,
    /// Replicates where the pipeline returned an error; counted as non-covering.
    pub failures: usize,
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    covered: usize,
    width: f64,
    sq_err: f64,
    ok: usize,
    failures: usize,
}

/// Seed of replicate `rep` derived from the run seed.
pub fn replicate_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(rep as u64 + 1)
}

/// Draws for replicate `rep`: its own ChaCha stream of the run seed.
pub fn replicate_sample(prior: &GaussianMixturePrior, m: usize, seed: u64, rep: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    prior.sample(&mut rng, m).1
}

pub fn run_coverage(spec: &CoverageSpec, disc: &ClassDiscretization, opts: &PipelineOptions) -> Result<Vec<CoverageRow>> {
    run_coverage_with(spec, disc, opts, |_, _| {})
}

/// Coverage study; `progress(rep, reps)` is called after each replicate.
pub fn run_coverage_with<F: FnMut(usize, usize)>(
    spec: &CoverageSpec,
    disc: &ClassDiscretization,
    opts: &PipelineOptions,
    mut progress: F,
) -> Result<Vec<CoverageRow>> {
    if spec.reps == 0 {
        return Err(Error::InvalidInput("need at least one replicate".into()));
    }
    if spec.targets.iter().all(|t| t.xs.is_empty()) {
        return Err(Error::InvalidInput("no evaluation points".into()));
    }
    let prior = spec.scenario.prior()?;
    let truth_prior: Prior = prior.clone().into();
    let truths: Vec<Vec<f64>> = spec
        .targets
        .iter()
        .map(|t| t.xs.iter().map(|&x| eb_target_value(&truth_prior, &EbTarget { kind: t.kind, x })).collect())
        .collect::<Result<_>>()?;
    let mut acc: Vec<Vec<Accumulator>> =
        spec.targets.iter().map(|t| vec![Accumulator::default(); t.xs.len()]).collect();

    for rep in 0..spec.reps {
        let samples = replicate_sample(&prior, spec.m, opts.seed, rep);
        let rep_opts = PipelineOptions { seed: replicate_seed(opts.seed, rep), ..opts.clone() };
        let prepared = PreparedData::new(&samples, disc, &rep_opts);
        for (ti, target) in spec.targets.iter().enumerate() {
            if target.xs.is_empty() {
                continue;
            }
            let results = prepared.as_ref().map_err(Clone::clone).and_then(|p| {
                analyze_prepared(p, disc, &target.xs, target.kind, &rep_opts)
            });
            match results {
                Ok(rs) => {
                    for (a, (r, &truth)) in acc[ti].iter_mut().zip(rs.iter().zip(&truths[ti])) {
                        a.ok += 1;
                        a.covered += r.contains(truth) as usize;
                        a.width += r.width();
                        a.sq_err += (r.estimate - truth).powi(2);
                    }
                }
                Err(_) => acc[ti].iter_mut().for_each(|a| a.failures += 1),
            }
        }
        progress(rep + 1, spec.reps);
    }

    let mut rows = Vec::new();
    for (ti, target) in spec.targets.iter().enumerate() {
        for (xi, &x) in target.xs.iter().enumerate() {
            let a = &acc[ti][xi];
            let ok = a.ok.max(1) as f64;
            rows.push(CoverageRow {
                kind: target.kind,
                x,
                truth: truths[ti][xi],
                coverage: a.covered as f64 / spec.reps as f64,
                mean_width: if a.ok > 0 { a.width / ok } else { f64::NAN },
                rmse: if a.ok > 0 { (a.sq_err / ok).sqrt() } else { f64::NAN },
                reps: spec.reps,
                failures: a.failures,
            });
        }
    }
    Ok(rows)
}

pub const COVERAGE_COLUMNS: &str = "target,x,truth,coverage,mean_width,rmse,reps,failures";

pub fn coverage_csv(rows: &[CoverageRow]) -> String {
    let mut out = format!("{COVERAGE_COLUMNS}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.kind.name(),
            r.x,
            r.truth,
            r.coverage,
            r.mean_width,
            r.rmse,
            r.reps,
            r.failures
        );
    }
    out
}

/// Standard error under the truth and worst-case biases over the class and its localization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub estimator: String,
    pub delta: f64,
    pub se: f64,
    pub bias_class: f64,
    pub bias_localized: f64,
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("estimator,delta,se,bias_class,bias_localized\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.estimator, r.delta, r.se, r.bias_class, r.bias_localized);
    }
    out
}

/// Minimax estimator tuned over the unlocalized class and its localized counterpart, both
/// scored against the truth with an oracle pilot of sample size m.
pub fn minimax_rows(
    disc: &ClassDiscretization,
    pilot: &PilotMarginal,
    functional: &LinearFunctional,
    truth: &Prior,
    m: usize,
    criterion: Criterion,
    alpha: f64,
) -> Result<Vec<(TableRow, AffineEstimator)>> {
    let localized = ModulusProblem::new(disc, pilot, functional.clone(), true)?;
    let global = localized.localized(false);
    let nu = truth.bin_masses(disc.bins());
    [("minimax", &global), ("minimax_inf", &localized)]
        .into_iter()
        .map(|(name, problem)| {
            let tuning = tune_delta(problem, m, alpha, criterion)?;
            let sol = problem.solve(tuning.delta)?;
            let est = problem.build_estimator(&sol, m)?;
            let row = TableRow {
                estimator: name.to_string(),
                delta: tuning.delta,
                se: est.standard_error(&nu, m),
                bias_class: global.worst_case_bias(&est)?.magnitude(),
                bias_localized: localized.worst_case_bias(&est)?.magnitude(),
            };
            Ok((row, est))
        })
        .collect()
}
