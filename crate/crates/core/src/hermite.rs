//! Hermite functions and their convolutions with the standard normal density.

use libm::lgamma;

use crate::special::{gl32, normal_pdf};

const PI_QUARTER_INV: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)

/// Values h_0(x), ..., h_n(x) via the three-term recurrence.
pub fn hermite_functions(x: f64, n: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(n + 1);
    h.push(PI_QUARTER_INV * (-0.5 * x * x).exp());
    if n >= 1 {
        h.push(std::f64::consts::SQRT_2 * x * h[0]);
    }
    for j in 1..n {
        let jf = j as f64;
        let next = (2.0 / (jf + 1.0)).sqrt() * x * h[j] - (jf / (jf + 1.0)).sqrt() * h[j - 1];
        h.push(next);
    }
    h
}

/// Closed form of (phi * h_j)(x) = x^j exp(-x^2/4) / sqrt(2 sqrt(pi) 2^j j!), evaluated in log space.
pub fn hermite_convolution(j: usize, x: f64) -> f64 {
    let jf = j as f64;
    let log_norm = 0.5
        * (std::f64::consts::LN_2 + 0.5 * std::f64::consts::PI.ln() + jf * std::f64::consts::LN_2
            + lgamma(jf + 1.0));
    if x == 0.0 {
        return if j == 0 { (-log_norm).exp() } else { 0.0 };
    }
    let sign = if x < 0.0 && j % 2 == 1 { -1.0 } else { 1.0 };
    sign * (jf * x.abs().ln() - 0.25 * x * x - log_norm).exp()
}

/// (phi * h_j)(x) for j = 0..=n using the ratio c_j / c_{j-1} = x / sqrt(2j).
pub fn hermite_convolutions(x: f64, n: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(n + 1);
    c.push(hermite_convolution(0, x));
    for j in 1..=n {
        let prev = c[j - 1];
        c.push(prev * x / (2.0 * j as f64).sqrt());
    }
    c
}

/// Integral of h_j over the real line: i^j sqrt(2 pi) h_j(0), zero for odd j.
pub fn hermite_integrals(n: usize) -> Vec<f64> {
    let h0 = hermite_functions(0.0, n);
    h0.iter()
        .enumerate()
        .map(|(j, &v)| {
            if j % 2 == 1 {
                0.0
            } else {
                let sign = if (j / 2) % 2 == 0 { 1.0 } else { -1.0 };
                sign * crate::special::SQRT_2PI * v
            }
        })
        .collect()
}

/// Effective support radius of h_0..h_n: beyond it every h_j is below ~e^-60 of its peak.
pub fn support_radius(n: usize) -> f64 {
    (2.0 * n as f64 + 1.0).sqrt() + 12.0
}

/// Integrates w(mu) h_j(mu) over [a, b] for all j, using 0.5-wide panels of 32-point Gauss-Legendre.
pub fn integrate_against<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, weight: F) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if b <= a {
        return out;
    }
    let panels = ((b - a) / 0.5).ceil().max(1.0) as usize;
    let step = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + step * p as f64;
        for (mu, w) in gl32().mapped(lo, lo + step) {
            let scale = w * weight(mu);
            if scale == 0.0 {
                continue;
            }
            for (o, h) in out.iter_mut().zip(hermite_functions(mu, n)) {
                *o += scale * h;
            }
        }
    }
    out
}

/// Integral of h_j over [t0, infinity) for j = 0..=n.
pub fn hermite_tail_integrals(t0: f64, n: usize) -> Vec<f64> {
    let r = support_radius(n);
    integrate_against(t0.max(-r), r, n, |_| 1.0)
}

/// Integral of phi(x - mu) h_j(mu) over mu >= 0 for j = 0..=n.
pub fn hermite_lfsr_numerators(x: f64, n: usize) -> Vec<f64> {
    integrate_against(0.0, x.max(0.0) + 12.0, n, |mu| normal_pdf(x - mu))
}
