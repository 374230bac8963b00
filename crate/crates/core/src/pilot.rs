//! Kernel pilot of the marginal density, Poisson-bootstrap localization radius and binned pilot masses.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::bins::BinGrid;
use crate::error::{Error, Result};
use crate::prior::Prior;
use crate::special::gl16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Sinc,
    #[default]
    DeLaValleePoussin,
}

impl Kernel {
    pub fn value(self, u: f64) -> f64 {
        match self {
            Kernel::Sinc => {
                if u.abs() < 1e-4 {
                    (1.0 - u * u / 6.0) / PI
                } else {
                    u.sin() / (PI * u)
                }
            }
            Kernel::DeLaValleePoussin => {
                if u.abs() < 1e-4 {
                    (1.5 - 0.625 * u * u) / PI
                } else {
                    // cos u - cos 2u = 2 sin(3u/2) sin(u/2)
                    2.0 * (1.5 * u).sin() * (0.5 * u).sin() / (PI * u * u)
                }
            }
        }
    }
}

pub fn kde_evaluate(samples: &[f64], kernel: Kernel, h: f64, x: f64) -> Result<f64> {
    check_kde(samples, h)?;
    Ok(kde_unchecked(samples, kernel, h, x))
}

fn check_kde(samples: &[f64], h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidInput("kernel density estimate needs samples".into()));
    }
    Ok(())
}

fn kde_unchecked(samples: &[f64], kernel: Kernel, h: f64, x: f64) -> f64 {
    let s: f64 = samples.iter().map(|&xi| kernel.value((xi - x) / h)).sum();
    s / (samples.len() as f64 * h)
}

/// h_m = 1 / sqrt(log m).
pub fn default_bandwidth(m: usize) -> Result<f64> {
    if m < 3 {
        return Err(Error::TooFewSamples { got: m, need: 3 });
    }
    Ok(1.0 / (m as f64).ln().sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub reps: usize,
    pub inflation: f64,
    pub eval_points: usize,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions { reps: 1000, inflation: 0.1, eval_points: 1001 }
    }
}

const MATRIX_LIMIT: usize = 15_000_000;

/// (1 + inflation) times the median over Poisson-bootstrap replicates of the sup deviation on [-M, M].
pub fn poisson_bootstrap_radius(
    samples: &[f64],
    kernel: Kernel,
    h: f64,
    bins: &BinGrid,
    options: &BootstrapOptions,
    seed: u64,
) -> Result<f64> {
    check_kde(samples, h)?;
    if options.reps == 0 || options.eval_points < 2 {
        return Err(Error::InvalidInput("bootstrap needs reps >= 1 and two evaluation points".into()));
    }
    let m = samples.len();
    let g = options.eval_points;
    let (lo, hi) = (bins.lower(), bins.upper());
    let grid: Vec<f64> = (0..g).map(|i| lo + (hi - lo) * i as f64 / (g - 1) as f64).collect();
    let kernel_row = |xi: f64, out: &mut [f64]| {
        for (o, &x) in out.iter_mut().zip(&grid) {
            *o = kernel.value((xi - x) / h) / h;
        }
    };
    let matrix: Option<Vec<f64>> = (m * g <= MATRIX_LIMIT).then(|| {
        let mut k = vec![0.0; m * g];
        for (i, &xi) in samples.iter().enumerate() {
            kernel_row(xi, &mut k[i * g..(i + 1) * g]);
        }
        k
    });
    let poisson = Poisson::new(1.0).expect("poisson(1)");
    let mut deviations = Vec::with_capacity(options.reps);
    let mut acc = vec![0.0; g];
    let mut row = vec![0.0; g];
    let mut z = vec![0.0; m];
    for rep in 0..options.reps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64);
        for zi in z.iter_mut() {
            *zi = poisson.sample(&mut rng);
        }
        let total: f64 = z.iter().sum();
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (i, &zi) in z.iter().enumerate() {
            let w = if total > 0.0 { zi / total } else { 1.0 / m as f64 };
            let c = 1.0 / m as f64 - w;
            if c == 0.0 {
                continue;
            }
            let k = match &matrix {
                Some(k) => &k[i * g..(i + 1) * g],
                None => {
                    kernel_row(samples[i], &mut row);
                    &row[..]
                }
            };
            for (a, kv) in acc.iter_mut().zip(k) {
                *a += c * kv;
            }
        }
        deviations.push(acc.iter().fold(0.0f64, |s, a| s.max(a.abs())));
    }
    Ok((1.0 + options.inflation) * median(&mut deviations))
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PilotDensity {
    Kde { samples: Vec<f64>, kernel: Kernel, bandwidth: f64 },
    /// The true marginal of a known prior.
    Exact(Prior),
}

/// Binned pilot nu_bar with its localization radius.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMarginal {
    bins: BinGrid,
    density: PilotDensity,
    c_m: f64,
    nu_bar: Vec<f64>,
    sample_size: usize,
}

impl PilotMarginal {
    /// Clipped kernel pilot: interior masses integrate max(KDE, c_m), tails use floored empirical proportions.
    pub fn build(samples: &[f64], bins: &BinGrid, kernel: Kernel, h: f64, c_m: f64) -> Result<Self> {
        check_kde(samples, h)?;
        if !(c_m > 0.0 && c_m.is_finite()) {
            return Err(Error::InvalidInput(format!("localization radius must be positive, got {c_m}")));
        }
        let m = samples.len();
        let f = |x: f64| kde_unchecked(samples, kernel, h, x);
        let k = bins.len();
        let counts = bins.counts(samples);
        let floor = 1.0 / (2.0 * m as f64);
        let mut nu_bar = vec![0.0; k];
        nu_bar[0] = (counts[0] as f64 / m as f64).max(floor);
        nu_bar[k - 1] = (counts[k - 1] as f64 / m as f64).max(floor);
        for (cell, nu) in nu_bar.iter_mut().enumerate().take(k - 1).skip(1) {
            let (a, b) = bins.cell(cell);
            *nu = integrate_clipped(&f, c_m, a, b);
        }
        Ok(PilotMarginal {
            bins: bins.clone(),
            density: PilotDensity::Kde { samples: samples.to_vec(), kernel, bandwidth: h },
            c_m,
            nu_bar,
            sample_size: m,
        })
    }

    /// Pilot equal to the true marginal of `prior`.
    pub fn oracle(prior: &Prior, bins: &BinGrid, c_m: f64, sample_size: usize) -> Result<Self> {
        if !(c_m > 0.0 && c_m.is_finite()) {
            return Err(Error::InvalidInput(format!("localization radius must be positive, got {c_m}")));
        }
        let nu_bar = prior.bin_masses(bins);
        if let Some(k) = nu_bar.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidInput(format!("oracle pilot has empty bin {k}")));
        }
        Ok(PilotMarginal {
            bins: bins.clone(),
            density: PilotDensity::Exact(prior.clone()),
            c_m,
            nu_bar,
            sample_size,
        })
    }

    pub fn bins(&self) -> &BinGrid {
        &self.bins
    }

    pub fn nu_bar(&self) -> &[f64] {
        &self.nu_bar
    }

    pub fn c_m(&self) -> f64 {
        self.c_m
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn source(&self) -> &PilotDensity {
        &self.density
    }

    /// Pilot density f_bar; the kernel pilot is clipped below at c_m.
    pub fn density(&self, x: f64) -> f64 {
        match &self.density {
            PilotDensity::Kde { samples, kernel, bandwidth } => {
                kde_unchecked(samples, *kernel, *bandwidth, x).max(self.c_m)
            }
            PilotDensity::Exact(prior) => prior.marginal_density(x),
        }
    }

    /// Allowed deviation |nu_G(k) - nu_bar(k)|.
    pub fn radius(&self, k: usize) -> f64 {
        self.bins.localization_width(k) * self.c_m
    }

    /// Same pilot with a different radius.
    pub fn with_radius(&self, c_m: f64) -> Result<Self> {
        if !(c_m > 0.0 && c_m.is_finite()) {
            return Err(Error::InvalidInput(format!("localization radius must be positive, got {c_m}")));
        }
        let mut p = self.clone();
        if let PilotDensity::Kde { samples, kernel, bandwidth } = &self.density {
            p = Self::build(samples, &self.bins, *kernel, *bandwidth, c_m)?;
        }
        p.c_m = c_m;
        Ok(p)
    }

    /// Short hash identifying nu_bar and c_m.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.nu_bar.iter().chain(std::iter::once(&self.c_m)) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}

/// Integral of max(f, c) over [a, b], splitting at sign changes of f - c.
fn integrate_clipped<F: Fn(f64) -> f64>(f: &F, c: f64, a: f64, b: f64) -> f64 {
    const PROBES: usize = 8;
    let g = |x: f64| f(x) - c;
    let mut cuts = vec![a];
    let mut prev_x = a;
    let mut prev_g = g(a);
    for i in 1..=PROBES {
        let x = a + (b - a) * i as f64 / PROBES as f64;
        let gx = g(x);
        if (prev_g < 0.0) != (gx < 0.0) {
            let (mut lo, mut hi, mut glo) = (prev_x, x, prev_g);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let gm = g(mid);
                if (gm < 0.0) == (glo < 0.0) {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-13 {
                    break;
                }
            }
            cuts.push(0.5 * (lo + hi));
        }
        prev_x = x;
        prev_g = gx;
    }
    cuts.push(b);
    cuts.windows(2).map(|w| gl16().integrate(w[0], w[1], |x| f(x).max(c))).sum()
}
