//! Fourier-inversion (Butucea-Comte) estimators of linear functionals, used as calibration pilots.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::EbKind;
use crate::hermite::hermite_functions;
use crate::special::{gl32, normal_pdf, SQRT_2PI};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "x", rename_all = "snake_case")]
pub enum BcKind {
    MarginalDensity(f64),
    PosteriorMeanNumerator(f64),
    LfsrNumerator(f64),
    PriorDensity(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcSpec {
    pub kind: BcKind,
    pub bandwidth: f64,
}

/// (re, im) of a complex number.
type C64 = (f64, f64);

fn cmul(a: C64, b: C64) -> C64 {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn cis(a: f64) -> C64 {
    (a.cos(), a.sin())
}

/// psi*(-t) = int_0^inf phi(x - mu) exp(-i t mu) dmu, truncated where the Gaussian factor is negligible.
pub fn lfsr_psi_star_neg(x: f64, t: f64) -> C64 {
    let upper = x.max(0.0) + 12.0;
    let panels = (upper / 0.5).ceil() as usize;
    let step = upper / panels as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for p in 0..panels {
        let lo = step * p as f64;
        for (mu, w) in gl32().mapped(lo, lo + step) {
            let f = w * normal_pdf(x - mu);
            re += f * (t * mu).cos();
            im -= f * (t * mu).sin();
        }
    }
    (re, im)
}

impl BcKind {
    pub fn x(self) -> f64 {
        match self {
            BcKind::MarginalDensity(x)
            | BcKind::PosteriorMeanNumerator(x)
            | BcKind::LfsrNumerator(x)
            | BcKind::PriorDensity(x) => x,
        }
    }

    /// psi*(-t), the Fourier transform of the functional's integrand at -t.
    pub fn psi_star_neg(self, t: f64) -> C64 {
        let damp = (-0.5 * t * t).exp();
        match self {
            BcKind::MarginalDensity(x) => {
                let e = cis(-x * t);
                (damp * e.0, damp * e.1)
            }
            BcKind::PosteriorMeanNumerator(x) => {
                let e = cmul(cis(-x * t), (x, -t));
                (damp * e.0, damp * e.1)
            }
            BcKind::LfsrNumerator(x) => lfsr_psi_star_neg(x, t),
            BcKind::PriorDensity(x) => cis(-x * t),
        }
    }

    /// psi*(-t) / phi*(t).
    pub fn weight(self, t: f64) -> C64 {
        match self {
            BcKind::MarginalDensity(x) => cis(-x * t),
            BcKind::PosteriorMeanNumerator(x) => cmul(cis(-x * t), (x, -t)),
            BcKind::LfsrNumerator(x) => {
                let p = lfsr_psi_star_neg(x, t);
                let g = (0.5 * t * t).exp();
                (g * p.0, g * p.1)
            }
            BcKind::PriorDensity(x) => {
                let g = (0.5 * t * t).exp();
                let e = cis(-x * t);
                (g * e.0, g * e.1)
            }
        }
    }
}

/// Composite Gauss-Legendre nodes on [-1/h, 1/h], 32 per unit length.
fn frequency_nodes(h: f64) -> Vec<(f64, f64)> {
    let cut = 1.0 / h;
    let panels = (2.0 * cut).ceil().max(1.0) as usize;
    let step = 2.0 * cut / panels as f64;
    (0..panels)
        .flat_map(|p| {
            let lo = -cut + step * p as f64;
            gl32().mapped(lo, lo + step).collect::<Vec<_>>()
        })
        .collect()
}

/// Empirical characteristic function of a sample on the quadrature nodes for one bandwidth.
#[derive(Debug, Clone)]
pub struct EmpiricalCf {
    bandwidth: f64,
    nodes: Vec<(f64, f64)>,
    values: Vec<C64>,
    sample_size: usize,
}

impl EmpiricalCf {
    pub fn new(samples: &[f64], bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidInput(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if samples.is_empty() {
            return Err(Error::TooFewSamples { got: 0, need: 1 });
        }
        let nodes = frequency_nodes(bandwidth);
        let m = samples.len() as f64;
        let values = nodes
            .iter()
            .map(|&(t, _)| {
                let (c, s) = samples
                    .iter()
                    .fold((0.0, 0.0), |(c, s), &x| (c + (t * x).cos(), s + (t * x).sin()));
                (c / m, s / m)
            })
            .collect();
        Ok(EmpiricalCf { bandwidth, nodes, values, sample_size: samples.len() })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn estimate(&self, kind: BcKind) -> Result<f64> {
        let (mut re, mut im) = (0.0, 0.0);
        for (&(t, w), &v) in self.nodes.iter().zip(&self.values) {
            let z = cmul(v, kind.weight(t));
            re += w * z.0;
            im += w * z.1;
        }
        re /= 2.0 * PI;
        im /= 2.0 * PI;
        if im.abs() > 1e-8 * re.abs().max(1.0) {
            return Err(Error::NumericFailure(format!("imaginary residue {im} in Fourier estimate")));
        }
        Ok(re)
    }
}

pub fn bc_estimate(samples: &[f64], spec: &BcSpec) -> Result<f64> {
    EmpiricalCf::new(samples, spec.bandwidth)?.estimate(spec.kind)
}

/// The estimator's per-observation weight Q(y), so that the estimate is the sample mean of Q.
pub fn bc_influence(spec: &BcSpec, y: f64) -> Result<f64> {
    bc_estimate(&[y], spec)
}

/// Expectation of the estimator when the prior density is sum_j theta_j h_j: coefficients on h_0..h_p.
pub fn bc_hermite_expectation(spec: &BcSpec, p: usize) -> Result<Vec<f64>> {
    if !(spec.bandwidth > 0.0) {
        return Err(Error::InvalidInput("bandwidth must be positive".into()));
    }
    let mut acc = vec![(0.0, 0.0); p + 1];
    for (t, w) in frequency_nodes(spec.bandwidth) {
        let psi = spec.kind.psi_star_neg(t);
        let h = hermite_functions(t, p);
        for (j, a) in acc.iter_mut().enumerate() {
            let ij = match j % 4 {
                0 => (1.0, 0.0),
                1 => (0.0, 1.0),
                2 => (-1.0, 0.0),
                _ => (0.0, -1.0),
            };
            let z = cmul(psi, ij);
            a.0 += w * h[j] * z.0;
            a.1 += w * h[j] * z.1;
        }
    }
    Ok(acc.into_iter().map(|(re, _)| re / SQRT_2PI).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcBandwidths {
    pub marginal: f64,
    pub posterior_mean_numerator: f64,
    pub lfsr_numerator: f64,
}

impl BcBandwidths {
    pub fn for_kind(&self, kind: EbKind) -> f64 {
        match kind {
            EbKind::PosteriorMean => self.posterior_mean_numerator,
            EbKind::Lfsr => self.lfsr_numerator,
        }
    }
}

pub fn bc_default_bandwidths(m: usize) -> Result<BcBandwidths> {
    if m < 3 {
        return Err(Error::TooFewSamples { got: m, need: 3 });
    }
    let h = 1.0 / (m as f64).ln().sqrt();
    Ok(BcBandwidths { marginal: h, posterior_mean_numerator: h, lfsr_numerator: h })
}

/// Bandwidth (log m / 2)^(-1/2) for the prior density.
pub fn bc_density_bandwidth(m: usize) -> Result<f64> {
    if m < 3 {
        return Err(Error::TooFewSamples { got: m, need: 3 });
    }
    Ok((0.5 * (m as f64).ln()).powf(-0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotTheta {
    pub theta_bar: f64,
    pub f_bar: f64,
    pub a_bar: f64,
    /// theta before clamping to [0, 1] (lfsr only).
    pub theta_unclamped: f64,
}

/// Combines numerator and density pilots: floors the density at c_floor and clamps lfsr to [0, 1].
pub fn theta_from_parts(a_bar: f64, f_raw: f64, kind: EbKind, c_floor: f64) -> Result<PilotTheta> {
    if !(c_floor > 0.0) {
        return Err(Error::InvalidInput(format!("density floor must be positive, got {c_floor}")));
    }
    let f_bar = f_raw.max(c_floor);
    let raw = a_bar / f_bar;
    let theta_bar = match kind {
        EbKind::Lfsr => raw.clamp(0.0, 1.0),
        EbKind::PosteriorMean => raw,
    };
    Ok(PilotTheta { theta_bar, f_bar, a_bar, theta_unclamped: raw })
}

fn numerator_kind(kind: EbKind, x: f64) -> BcKind {
    match kind {
        EbKind::PosteriorMean => BcKind::PosteriorMeanNumerator(x),
        EbKind::Lfsr => BcKind::LfsrNumerator(x),
    }
}

/// Fourier pilots on fold 1 with the characteristic function cached across evaluation points.
#[derive(Debug, Clone)]
pub struct FourierPilot {
    cfs: Vec<EmpiricalCf>,
    bandwidths: BcBandwidths,
}

impl FourierPilot {
    pub fn new(fold1: &[f64]) -> Result<Self> {
        let bandwidths = bc_default_bandwidths(fold1.len())?;
        Self::with_bandwidths(fold1, bandwidths)
    }

    pub fn with_bandwidths(fold1: &[f64], bandwidths: BcBandwidths) -> Result<Self> {
        let mut cfs: Vec<EmpiricalCf> = Vec::new();
        for h in [bandwidths.marginal, bandwidths.posterior_mean_numerator, bandwidths.lfsr_numerator] {
            if !cfs.iter().any(|c| c.bandwidth() == h) {
                cfs.push(EmpiricalCf::new(fold1, h)?);
            }
        }
        Ok(FourierPilot { cfs, bandwidths })
    }

    fn cf(&self, h: f64) -> &EmpiricalCf {
        self.cfs.iter().find(|c| c.bandwidth() == h).expect("cached bandwidth")
    }

    pub fn bandwidths(&self) -> BcBandwidths {
        self.bandwidths
    }

    pub fn theta(&self, x: f64, kind: EbKind, c_floor: f64) -> Result<PilotTheta> {
        let a = self.cf(self.bandwidths.for_kind(kind)).estimate(numerator_kind(kind, x))?;
        let f = self.cf(self.bandwidths.marginal).estimate(BcKind::MarginalDensity(x))?;
        theta_from_parts(a, f, kind, c_floor)
    }
}

pub fn pilot_theta(fold1: &[f64], x: f64, kind: EbKind, c_floor: f64) -> Result<PilotTheta> {
    FourierPilot::new(fold1)?.theta(x, kind, c_floor)
}
