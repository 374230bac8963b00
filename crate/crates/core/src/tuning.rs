//! Choice of the modulus tuning parameter, folded-normal critical values and bias-aware intervals.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modulus::{AffineEstimator, ModulusProblem};
use crate::special::{normal_cdf, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Mse,
    CiWidth,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Mse => "mse",
            Criterion::CiWidth => "ci_width",
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// 1 - alpha quantile of |N(u, 1)|.
pub fn cv_alpha(u: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::InvalidInput(format!("cv_alpha needs a finite u >= 0, got {u}")));
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    let coverage = |t: f64| normal_cdf(t - u) - normal_cdf(-t - u);
    let (mut lo, mut hi) = (u.max(z), u + z + 10.0);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if coverage(mid) < 1.0 - alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Half-width sqrt(V) cv_alpha(B / sqrt(V)); equals B when V = 0.
pub fn bias_aware_halfwidth(b: f64, v: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(b >= 0.0 && v >= 0.0) {
        return Err(Error::InvalidInput(format!("need B >= 0 and V >= 0, got B = {b}, V = {v}")));
    }
    if v == 0.0 {
        return Ok(b);
    }
    let s = v.sqrt();
    Ok(s * cv_alpha(b / s, alpha)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub delta: f64,
    pub omega: f64,
    pub omega_prime: f64,
    pub max_bias: f64,
    pub variance_proxy: f64,
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub criterion: Criterion,
    pub delta: f64,
    pub value: f64,
    pub trace: Vec<TracePoint>,
    pub delta_min: f64,
    pub delta_max: f64,
    /// delta_min exceeded delta_max and delta_max was used.
    pub degenerate: bool,
}

impl TuningResult {
    /// Trace sorted by delta.
    pub fn sorted_trace(&self) -> Vec<TracePoint> {
        let mut t = self.trace.clone();
        t.sort_by(|a, b| a.delta.total_cmp(&b.delta));
        t
    }

    pub fn trace_csv(&self) -> String {
        trace_csv(&self.sorted_trace())
    }
}

pub fn trace_csv(points: &[TracePoint]) -> String {
    let mut out = String::from("delta,omega,omega_prime,max_bias,variance_proxy,criterion\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.delta, p.omega, p.omega_prime, p.max_bias, p.variance_proxy, p.criterion
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneOptions {
    pub scan_points: usize,
    pub max_evals: usize,
    pub rel_tol: f64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions { scan_points: 8, max_evals: 40, rel_tol: 1e-3 }
    }
}

pub fn delta_min(c_m: f64, m: usize) -> f64 {
    let m = m as f64;
    c_m * (m.ln() / m).sqrt()
}

/// Bias, variance proxy and criterion of the estimator built at delta.
pub fn evaluate_delta(
    problem: &ModulusProblem<'_>,
    delta: f64,
    m: usize,
    alpha: f64,
    criterion: Criterion,
) -> Result<TracePoint> {
    let s = problem.solve(delta)?;
    let max_bias = (0.5 * (s.omega - delta * s.omega_prime)).max(0.0);
    let variance_proxy = s.omega_prime.powi(2) / m as f64;
    let value = match criterion {
        Criterion::Mse => max_bias * max_bias + variance_proxy,
        Criterion::CiWidth => bias_aware_halfwidth(max_bias, variance_proxy, alpha)?,
    };
    Ok(TracePoint { delta, omega: s.omega, omega_prime: s.omega_prime, max_bias, variance_proxy, criterion: value })
}

pub fn tune_delta(
    problem: &ModulusProblem<'_>,
    m: usize,
    alpha: f64,
    criterion: Criterion,
) -> Result<TuningResult> {
    tune_delta_with(problem, m, alpha, criterion, &TuneOptions::default())
}

pub fn tune_delta_with(
    problem: &ModulusProblem<'_>,
    m: usize,
    alpha: f64,
    criterion: Criterion,
    opts: &TuneOptions,
) -> Result<TuningResult> {
    check_alpha(alpha)?;
    if m < 2 {
        return Err(Error::TooFewSamples { got: m, need: 2 });
    }
    let lo = delta_min(problem.pilot().c_m(), m);
    let hi = problem.delta_max()?;
    if !(hi > 0.0) {
        return Err(Error::NumericFailure(format!("degenerate modulus: delta_max = {hi}")));
    }
    let mut trace = Vec::new();
    let eval = |delta: f64, trace: &mut Vec<TracePoint>| -> Result<f64> {
        let p = evaluate_delta(problem, delta, m, alpha, criterion)?;
        trace.push(p);
        Ok(p.criterion)
    };

    if !(lo > 0.0) || lo >= hi {
        let value = eval(hi, &mut trace)?;
        return Ok(TuningResult {
            criterion,
            delta: hi,
            value,
            trace,
            delta_min: lo,
            delta_max: hi,
            degenerate: true,
        });
    }

    let (a, b) = (lo.ln(), hi.ln());
    let n = opts.scan_points.max(3);
    let grid: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
    let mut values = Vec::with_capacity(n);
    for (i, &t) in grid.iter().enumerate() {
        let delta = if i == 0 { lo } else if i == n - 1 { hi } else { t.exp() };
        values.push(eval(delta, &mut trace)?);
    }
    let best = argmin_prefer_last(&values);
    let (mut left, mut right) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n - 1)]);

    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = right - ratio * (right - left);
    let mut d = left + ratio * (right - left);
    let mut fc = eval(c.exp(), &mut trace)?;
    let mut fd = eval(d.exp(), &mut trace)?;
    while trace.len() < opts.max_evals && (right - left).exp() - 1.0 > opts.rel_tol {
        if fc < fd {
            right = d;
            d = c;
            fd = fc;
            c = right - ratio * (right - left);
            fc = eval(c.exp(), &mut trace)?;
        } else {
            left = c;
            c = d;
            fc = fd;
            d = left + ratio * (right - left);
            fd = eval(d.exp(), &mut trace)?;
        }
    }

    let values: Vec<f64> = trace.iter().map(|p| p.criterion).collect();
    let pick = argmin_prefer_larger_delta(&trace);
    Ok(TuningResult {
        criterion,
        delta: trace[pick].delta,
        value: values[pick],
        trace,
        delta_min: lo,
        delta_max: hi,
        degenerate: false,
    })
}

fn argmin_prefer_last(values: &[f64]) -> usize {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * min.abs();
    values.iter().rposition(|&v| v <= min + tol).unwrap_or(0)
}

fn argmin_prefer_larger_delta(trace: &[TracePoint]) -> usize {
    let min = trace.iter().map(|p| p.criterion).fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * min.abs();
    (0..trace.len())
        .filter(|&i| trace[i].criterion <= min + tol)
        .max_by(|&i, &j| trace[i].delta.total_cmp(&trace[j].delta))
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasAwareInterval {
    pub estimate: f64,
    pub half_width: f64,
    pub max_bias: f64,
    pub variance: f64,
    pub alpha: f64,
    pub q0: f64,
    pub mean_q: f64,
    pub m: usize,
}

impl BiasAwareInterval {
    pub fn lower(&self) -> f64 {
        self.estimate - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.estimate + self.half_width
    }

    pub fn standard_error(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower() <= value && value <= self.upper()
    }
}

/// Estimate on fold 2 with its unbiased variance estimate and bias-aware half-width.
pub fn estimate_and_interval(estimator: &AffineEstimator, fold2: &[f64], alpha: f64) -> Result<BiasAwareInterval> {
    check_alpha(alpha)?;
    let m = fold2.len();
    if m < 2 {
        return Err(Error::TooFewSamples { got: m, need: 2 });
    }
    let qs: Vec<f64> = fold2.iter().map(|&x| estimator.q(x)).collect();
    let mean_q = qs.iter().sum::<f64>() / m as f64;
    let ss: f64 = qs.iter().map(|q| (q - mean_q) * (q - mean_q)).sum();
    let variance = ss / (m - 1) as f64 / m as f64;
    let half_width = bias_aware_halfwidth(estimator.max_bias, variance, alpha)?;
    Ok(BiasAwareInterval {
        estimate: estimator.q0 + mean_q,
        half_width,
        max_bias: estimator.max_bias,
        variance,
        alpha,
        q0: estimator.q0,
        mean_q,
        m,
    })
}

/// Seeded random split; the first ceil(n/2) permuted samples form fold 1.
pub fn split_sample(samples: &[f64], seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples.len() < 4 {
        return Err(Error::TooFewSamples { got: samples.len(), need: 4 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = samples.to_vec();
    v.shuffle(&mut rng);
    let fold2 = v.split_off(samples.len().div_ceil(2));
    Ok((v, fold2))
}
