//! Calibrated empirical Bayes intervals: pilot on one fold, linearized minimax estimation on the other.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{theta_from_parts, FourierPilot, PilotTheta};
use crate::functional::{calibrated_delta_functional, EbKind, EbTarget, LinearFunctional};
use crate::modulus::{AffineEstimator, ClassDiscretization, ModulusProblem};
use crate::pilot::{default_bandwidth, poisson_bootstrap_radius, BootstrapOptions, Kernel, PilotMarginal};
use crate::prior::Prior;
use crate::tuning::{bias_aware_halfwidth, estimate_and_interval, split_sample, tune_delta, Criterion, TuningResult};

pub const MIN_SAMPLES: usize = 20;

/// Where the pilot quantities come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PilotMode {
    Data,
    /// True marginal and true theta_G(x) of a known prior.
    Oracle(Prior),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub alpha: f64,
    pub eta: f64,
    pub criterion: Criterion,
    pub seed: u64,
    pub kernel: Kernel,
    pub bootstrap: BootstrapOptions,
    /// Fixed localization radius; otherwise the Poisson bootstrap on fold 1.
    pub c_m: Option<f64>,
    /// Fixed delta; otherwise tuned at the median evaluation point.
    pub delta: Option<f64>,
    pub pilot: PilotMode,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            alpha: 0.1,
            eta: 0.01,
            criterion: Criterion::CiWidth,
            seed: 1,
            kernel: Kernel::default(),
            bootstrap: BootstrapOptions::default(),
            c_m: None,
            delta: None,
            pilot: PilotMode::Data,
        }
    }
}

impl PipelineOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidInput(format!("eta must be >= 0, got {}", self.eta)));
        }
        if let Some(c) = self.c_m {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidInput(format!("c_m must be positive, got {c}")));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidInput(format!("delta must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub delta: f64,
    pub omega: f64,
    pub omega_prime: f64,
    pub max_bias: f64,
    pub variance: f64,
    pub se: f64,
    pub half_width: f64,
    pub c_m: f64,
    pub fold1: usize,
    pub fold2: usize,
    pub seed: u64,
    pub alpha: f64,
    pub eta: f64,
    pub f_bar: f64,
    pub pilot_unclamped: f64,
    pub raw_estimate: f64,
    pub raw_lower: f64,
    pub raw_upper: f64,
    pub tuning_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEBResult {
    pub x: f64,
    pub target: String,
    pub pilot: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub diagnostics: Diagnostics,
}

impl MCEBResult {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

pub const RESULT_COLUMNS: &str = "x,target,pilot,estimate,lower,upper,raw_lower,raw_upper,max_bias,se,delta,omega,omega_prime,c_m,eta,seed";

pub fn results_csv(results: &[MCEBResult]) -> String {
    let mut out = format!("{RESULT_COLUMNS}\n");
    for r in results {
        let d = &r.diagnostics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.x, r.target, r.pilot, r.estimate, r.lower, r.upper, d.raw_lower, d.raw_upper, d.max_bias, d.se, d.delta, d.omega, d.omega_prime,
            d.c_m, d.eta, d.seed
        );
    }
    out
}

/// Split folds and fold-1 pilots, shared across targets and evaluation points.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub fold1: Vec<f64>,
    pub fold2: Vec<f64>,
    pub pilot: PilotMarginal,
    fourier: Option<FourierPilot>,
    oracle: Option<Prior>,
    seed: u64,
}

impl PreparedData {
    pub fn new(samples: &[f64], disc: &ClassDiscretization, opts: &PipelineOptions) -> Result<Self> {
        opts.validate()?;
        if samples.len() < MIN_SAMPLES {
            return Err(Error::TooFewSamples { got: samples.len(), need: MIN_SAMPLES });
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("samples must be finite".into()));
        }
        let (fold1, fold2) = split_sample(samples, opts.seed)?;
        let bins = disc.bins();
        let h = default_bandwidth(fold1.len())?;
        let c_m = match opts.c_m {
            Some(c) => c,
            None => poisson_bootstrap_radius(&fold1, opts.kernel, h, bins, &opts.bootstrap, opts.seed.wrapping_add(1))?,
        };
        let (pilot, fourier, oracle) = match &opts.pilot {
            PilotMode::Data => {
                let pilot = PilotMarginal::build(&fold1, bins, opts.kernel, h, c_m)?;
                (pilot, Some(FourierPilot::new(&fold1)?), None)
            }
            PilotMode::Oracle(g) => (PilotMarginal::oracle(g, bins, c_m, fold2.len())?, None, Some(g.clone())),
        };
        Ok(PreparedData { fold1, fold2, pilot, fourier, oracle, seed: opts.seed })
    }

    pub fn pilot_theta(&self, target: EbTarget) -> Result<PilotTheta> {
        let c = self.pilot.c_m();
        match (&self.fourier, &self.oracle) {
            (_, Some(g)) => {
                let a = g.functional_value(&target.numerator())?;
                let f = g.functional_value(&target.denominator())?;
                theta_from_parts(a, f, target.kind, c)
            }
            (Some(fp), None) => fp.theta(target.x, target.kind, c),
            (None, None) => Err(Error::InvalidInput("prepared data has no pilot".into())),
        }
    }
}

fn median_point(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

struct Fit {
    estimator: AffineEstimator,
    estimate: f64,
    half_width: f64,
    variance: f64,
}

fn fit(
    disc: &ClassDiscretization,
    prep: &PreparedData,
    functional: LinearFunctional,
    delta: f64,
    alpha: f64,
) -> Result<Fit> {
    let problem = ModulusProblem::new(disc, &prep.pilot, functional, true)?;
    let sol = problem.solve(delta)?;
    let estimator = problem.build_estimator(&sol, prep.fold2.len())?;
    let iv = estimate_and_interval(&estimator, &prep.fold2, alpha)?;
    Ok(Fit { estimate: iv.estimate, half_width: iv.half_width, variance: iv.variance, estimator })
}

fn choose_delta(
    disc: &ClassDiscretization,
    prep: &PreparedData,
    functional: LinearFunctional,
    opts: &PipelineOptions,
) -> Result<(f64, Option<TuningResult>)> {
    match opts.delta {
        Some(d) => Ok((d, None)),
        None => {
            let problem = ModulusProblem::new(disc, &prep.pilot, functional, true)?;
            let t = tune_delta(&problem, prep.fold2.len(), opts.alpha, opts.criterion)?;
            Ok((t.delta, Some(t)))
        }
    }
}

/// Calibrated intervals for theta_G(x) at each x, with delta tuned once at the median x.
pub fn analyze_prepared(
    prep: &PreparedData,
    disc: &ClassDiscretization,
    xs: &[f64],
    kind: EbKind,
    opts: &PipelineOptions,
) -> Result<Vec<MCEBResult>> {
    opts.validate()?;
    if xs.is_empty() {
        return Err(Error::InvalidInput("no evaluation points".into()));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("evaluation points must be finite".into()));
    }
    let functional_at = |x: f64| -> Result<(LinearFunctional, PilotTheta)> {
        let target = EbTarget { kind, x };
        let p = prep.pilot_theta(target)?;
        Ok((calibrated_delta_functional(target, p.theta_bar, p.f_bar)?, p))
    };
    let (delta, tuning) = choose_delta(disc, prep, functional_at(median_point(xs))?.0, opts)?;
    let degenerate = tuning.as_ref().is_some_and(|t| t.degenerate);

    xs.iter()
        .map(|&x| {
            let (functional, p) = functional_at(x)?;
            let f = fit(disc, prep, functional, delta, opts.alpha)?;
            let raw_estimate = p.theta_bar + f.estimate;
            let half = (1.0 + opts.eta) * f.half_width;
            let (raw_lower, raw_upper) = (raw_estimate - half, raw_estimate + half);
            let clamp = |v: f64| if kind == EbKind::Lfsr { v.clamp(0.0, 1.0) } else { v };
            Ok(MCEBResult {
                x,
                target: kind.name().to_string(),
                pilot: p.theta_bar,
                estimate: clamp(raw_estimate),
                lower: clamp(raw_lower),
                upper: clamp(raw_upper),
                diagnostics: Diagnostics {
                    delta,
                    omega: f.estimator.omega,
                    omega_prime: f.estimator.omega_prime,
                    max_bias: f.estimator.max_bias,
                    variance: f.variance,
                    se: f.variance.sqrt(),
                    half_width: f.half_width,
                    c_m: prep.pilot.c_m(),
                    fold1: prep.fold1.len(),
                    fold2: prep.fold2.len(),
                    seed: prep.seed,
                    alpha: opts.alpha,
                    eta: opts.eta,
                    f_bar: p.f_bar,
                    pilot_unclamped: p.theta_unclamped,
                    raw_estimate,
                    raw_lower,
                    raw_upper,
                    tuning_degenerate: degenerate,
                },
            })
        })
        .collect()
}

pub fn mceb_analyze(
    samples: &[f64],
    disc: &ClassDiscretization,
    xs: &[f64],
    kind: EbKind,
    opts: &PipelineOptions,
) -> Result<Vec<MCEBResult>> {
    let prep = PreparedData::new(samples, disc, opts)?;
    analyze_prepared(&prep, disc, xs, kind, opts)
}

/// Plain linear functional: the same pipeline without linearization; `opts.eta` is ignored.
pub fn mceb_linear(
    samples: &[f64],
    disc: &ClassDiscretization,
    functional: &LinearFunctional,
    opts: &PipelineOptions,
) -> Result<MCEBResult> {
    if matches!(functional, LinearFunctional::CalibratedDelta { .. }) {
        return Err(Error::InvalidInput("use mceb_analyze for calibrated targets".into()));
    }
    let prep = PreparedData::new(samples, disc, opts)?;
    let (delta, tuning) = choose_delta(disc, &prep, functional.clone(), opts)?;
    let f = fit(disc, &prep, functional.clone(), delta, opts.alpha)?;
    let x = match *functional {
        LinearFunctional::MarginalDensityAt(x)
        | LinearFunctional::PriorTailProb(x)
        | LinearFunctional::PriorDensityAt(x)
        | LinearFunctional::PosteriorMeanNumerator(x)
        | LinearFunctional::LfsrNumerator(x) => x,
        LinearFunctional::CalibratedDelta { target, .. } => target.x,
    };
    let check = bias_aware_halfwidth(f.estimator.max_bias, f.variance, opts.alpha)?;
    debug_assert!((check - f.half_width).abs() <= 1e-12 * check.max(1.0));
    Ok(MCEBResult {
        x,
        target: functional.label(),
        pilot: f64::NAN,
        estimate: f.estimate,
        lower: f.estimate - f.half_width,
        upper: f.estimate + f.half_width,
        diagnostics: Diagnostics {
            delta,
            omega: f.estimator.omega,
            omega_prime: f.estimator.omega_prime,
            max_bias: f.estimator.max_bias,
            variance: f.variance,
            se: f.variance.sqrt(),
            half_width: f.half_width,
            c_m: prep.pilot.c_m(),
            fold1: prep.fold1.len(),
            fold2: prep.fold2.len(),
            seed: prep.seed,
            alpha: opts.alpha,
            eta: 0.0,
            f_bar: f64::NAN,
            pilot_unclamped: f64::NAN,
            raw_estimate: f.estimate,
            raw_lower: f.estimate - f.half_width,
            raw_upper: f.estimate + f.half_width,
            tuning_degenerate: tuning.is_some_and(|t| t.degenerate),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bins::BinGrid;
    use crate::functional::eb_target_value;
    use crate::prior::{GaussianComponent, GaussianMixturePrior, LocationGrid, PriorClass};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bimodal() -> GaussianMixturePrior {
        GaussianMixturePrior::new(vec![
            GaussianComponent { weight: 0.5, mean: -1.5, sd: 0.2 },
            GaussianComponent { weight: 0.5, mean: 1.5, sd: 0.2 },
        ])
        .unwrap()
    }

    fn disc() -> ClassDiscretization {
        let class = PriorClass::gaussian_mixture(LocationGrid::new(3.0, 20).unwrap(), 0.2).unwrap();
        ClassDiscretization::new(class, BinGrid::uniform(6.0, 48).unwrap())
    }

    fn data(n: usize, seed: u64) -> Vec<f64> {
        bimodal().sample(&mut ChaCha8Rng::seed_from_u64(seed), n).1
    }

    fn fast() -> PipelineOptions {
        PipelineOptions { bootstrap: BootstrapOptions { reps: 100, ..Default::default() }, ..Default::default() }
    }

    #[test]
    fn intervals_are_ordered_and_inflated() {
        let d = disc();
        let xs = data(1000, 5);
        let opts = fast();
        let res = mceb_analyze(&xs, &d, &[-1.0, 0.0, 1.0], EbKind::PosteriorMean, &opts).unwrap();
        assert_eq!(res.len(), 3);
        for r in &res {
            assert!(r.lower <= r.estimate && r.estimate <= r.upper);
            let t = bias_aware_halfwidth(r.diagnostics.max_bias, r.diagnostics.variance, opts.alpha).unwrap();
            assert_abs_diff_eq!(r.width(), 2.0 * (1.0 + opts.eta) * t, epsilon = 1e-12);
            assert_eq!(r.diagnostics.fold1, 500);
            assert_eq!(r.diagnostics.delta, res[0].diagnostics.delta);
        }
        let csv = results_csv(&res);
        assert!(csv.starts_with(RESULT_COLUMNS));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn inflation_nests_intervals() {
        let d = disc();
        let xs = data(1000, 9);
        let base = PipelineOptions { eta: 0.0, ..fast() };
        let wide = PipelineOptions { eta: 0.05, ..base.clone() };
        let a = mceb_analyze(&xs, &d, &[0.5], EbKind::PosteriorMean, &base).unwrap();
        let b = mceb_analyze(&xs, &d, &[0.5], EbKind::PosteriorMean, &wide).unwrap();
        assert_eq!(a[0].estimate, b[0].estimate);
        assert!(b[0].lower <= a[0].lower && a[0].upper <= b[0].upper);
    }

    #[test]
    fn symmetric_prior_posterior_mean_at_zero() {
        let d = disc();
        let xs = data(2000, 11);
        let res = mceb_analyze(&xs, &d, &[0.0], EbKind::PosteriorMean, &fast()).unwrap();
        assert!(res[0].contains(0.0), "{:?}", res[0]);
    }

    #[test]
    fn lfsr_reports_are_clamped() {
        let d = disc();
        let xs = data(1000, 2);
        let res = mceb_analyze(&xs, &d, &[-2.5, 0.0, 2.5], EbKind::Lfsr, &fast()).unwrap();
        for r in &res {
            assert!(0.0 <= r.lower && r.upper <= 1.0 && r.lower <= r.estimate && r.estimate <= r.upper);
            assert!(r.diagnostics.raw_lower <= r.diagnostics.raw_estimate);
            assert!((0.0..=1.0).contains(&r.pilot));
        }
    }

    #[test]
    fn oracle_pilot_centers_at_truth() {
        let d = disc();
        let g: Prior = bimodal().into();
        let opts = PipelineOptions { pilot: PilotMode::Oracle(g.clone()), c_m: Some(0.02), delta: Some(0.05), ..fast() };
        let xs = data(400, 3);
        let prep = PreparedData::new(&xs, &d, &opts).unwrap();
        let target = EbTarget::posterior_mean(1.0);
        let p = prep.pilot_theta(target).unwrap();
        assert_abs_diff_eq!(p.theta_bar, eb_target_value(&g, &target).unwrap(), epsilon = 1e-12);
        let f = calibrated_delta_functional(target, p.theta_bar, p.f_bar).unwrap();
        assert_abs_diff_eq!(g.functional_value(&f).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = disc();
        let xs = data(10, 1);
        assert!(matches!(
            mceb_analyze(&xs, &d, &[0.0], EbKind::Lfsr, &fast()),
            Err(Error::TooFewSamples { .. })
        ));
        let xs = data(100, 1);
        let bad = PipelineOptions { alpha: 1.5, ..fast() };
        assert!(mceb_analyze(&xs, &d, &[0.0], EbKind::Lfsr, &bad).is_err());
        assert!(mceb_analyze(&xs, &d, &[], EbKind::Lfsr, &fast()).is_err());
    }

    #[test]
    fn tiny_radius_reports_empty_class() {
        let d = disc();
        let xs = data(400, 4);
        let opts = PipelineOptions { c_m: Some(1e-7), ..fast() };
        let err = mceb_linear(&xs, &d, &LinearFunctional::MarginalDensityAt(0.0), &opts).unwrap_err();
        assert!(matches!(err, Error::EmptyLocalizedClass { .. }), "{err:?}");
    }

    #[test]
    fn linear_pipeline_has_no_inflation() {
        let d = disc();
        let xs = data(1000, 8);
        let r = mceb_linear(&xs, &d, &LinearFunctional::PriorTailProb(0.0), &fast()).unwrap();
        assert_eq!(r.diagnostics.eta, 0.0);
        assert_abs_diff_eq!(r.width(), 2.0 * r.diagnostics.half_width, epsilon = 1e-14);
        assert!(r.contains(0.5), "{r:?}");
    }
}
