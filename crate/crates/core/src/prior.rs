//! Concrete priors, the two convex prior classes, and their discretized representations.

use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bins::BinGrid;
use crate::conic::{Constraint, SparseRow};
use crate::error::{Error, Result};
use crate::functional::LinearFunctional;
use crate::hermite::{
    hermite_convolutions, hermite_functions, hermite_integrals, hermite_lfsr_numerators,
    hermite_tail_integrals,
};
use crate::special::{gl32, gl64, normal_cdf, normal_pdf, normal_pdf_scaled};

/// Symmetric grid {-K, -K + K/p, ..., K}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationGrid {
    half_width: f64,
    resolution: usize,
}

impl LocationGrid {
    pub fn new(half_width: f64, resolution: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) || resolution == 0 {
            return Err(Error::InvalidInput(format!(
                "location grid needs K > 0 and p >= 1, got K={half_width}, p={resolution}"
            )));
        }
        Ok(LocationGrid { half_width, resolution })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        2 * self.resolution + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        let p = self.resolution as i64;
        (-p..=p).map(|j| j as f64 * self.half_width / p as f64).collect()
    }
}

/// One N(mean, sd^2) component; sd = 0 is a point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

impl GaussianComponent {
    fn marginal_sd(&self) -> f64 {
        (1.0 + self.sd * self.sd).sqrt()
    }

    fn marginal_density(&self, x: f64) -> f64 {
        normal_pdf_scaled(x, self.mean, self.marginal_sd())
    }

    /// Unit-weight value of a linear functional.
    fn functional_value(&self, f: &LinearFunctional) -> Result<f64> {
        let s2 = self.sd * self.sd;
        Ok(match *f {
            LinearFunctional::MarginalDensityAt(x) => self.marginal_density(x),
            LinearFunctional::PosteriorMeanNumerator(x) => {
                self.marginal_density(x) * (s2 * x + self.mean) / (1.0 + s2)
            }
            LinearFunctional::LfsrNumerator(x) => {
                if self.sd == 0.0 {
                    if self.mean >= 0.0 {
                        normal_pdf(x - self.mean)
                    } else {
                        0.0
                    }
                } else {
                    let m = (s2 * x + self.mean) / (1.0 + s2);
                    let s_post = self.sd / (1.0 + s2).sqrt();
                    self.marginal_density(x) * normal_cdf(m / s_post)
                }
            }
            LinearFunctional::PriorTailProb(t0) => {
                if self.sd == 0.0 {
                    if self.mean >= t0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    normal_cdf((self.mean - t0) / self.sd)
                }
            }
            LinearFunctional::PriorDensityAt(x0) => {
                if self.sd == 0.0 {
                    return Err(Error::UnsupportedFunctional {
                        functional: f.label(),
                        class: "point-mass mixture".into(),
                    });
                }
                normal_pdf_scaled(x0, self.mean, self.sd)
            }
            LinearFunctional::CalibratedDelta { target, theta_bar, f_bar } => {
                let a = self.functional_value(&target.numerator())?;
                let fm = self.marginal_density(target.x);
                (a - theta_bar * fm) / f_bar
            }
        })
    }

    fn bin_mass(&self, lo: f64, hi: f64) -> f64 {
        let s = self.marginal_sd();
        let a = (lo - self.mean) / s;
        let b = (hi - self.mean) / s;
        if a > 0.0 {
            normal_cdf(-a) - normal_cdf(-b)
        } else {
            normal_cdf(b) - normal_cdf(a)
        }
    }
}

/// Finite mixture of Gaussian components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixturePrior {
    components: Vec<GaussianComponent>,
}

impl GaussianMixturePrior {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("mixture needs at least one component".into()));
        }
        for c in &components {
            if !(c.weight >= 0.0) || !c.mean.is_finite() || !(c.sd >= 0.0) || !c.sd.is_finite() {
                return Err(Error::InvalidInput(format!("invalid mixture component {c:?}")));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("mixture weights sum to {total}, not 1")));
        }
        let components = components
            .into_iter()
            .map(|c| GaussianComponent { weight: c.weight / total, ..c })
            .collect();
        Ok(GaussianMixturePrior { components })
    }

    pub fn single(mean: f64, sd: f64) -> Result<Self> {
        Self::new(vec![GaussianComponent { weight: 1.0, mean, sd }])
    }

    pub fn on_grid(grid: &LocationGrid, tau: f64, weights: &[f64]) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} weights, got {}",
                grid.len(),
                weights.len()
            )));
        }
        Self::new(
            grid.points()
                .into_iter()
                .zip(weights)
                .map(|(mean, &weight)| GaussianComponent { weight, mean, sd: tau })
                .collect(),
        )
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// Draws (mu_i, X_i) pairs.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut cumulative = Vec::with_capacity(self.components.len());
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.weight;
            cumulative.push(acc);
        }
        let mut mus = Vec::with_capacity(n);
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.random::<f64>() * acc;
            let j = cumulative.partition_point(|&c| c <= u).min(self.components.len() - 1);
            let c = &self.components[j];
            let z: f64 = StandardNormal.sample(rng);
            let e: f64 = StandardNormal.sample(rng);
            let mu = c.mean + c.sd * z;
            mus.push(mu);
            xs.push(mu + e);
        }
        (mus, xs)
    }
}

/// Truncated Hermite expansion g = sum_j alpha_j h_j of a prior density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteSobolevPrior {
    coefficients: Vec<f64>,
    radius: f64,
    nonneg_grid: Vec<f64>,
}

pub const NONNEG_SLACK: f64 = 1e-9;

impl HermiteSobolevPrior {
    pub fn new(coefficients: Vec<f64>, radius: f64, nonneg_grid: Vec<f64>) -> Result<Self> {
        let prior = HermiteSobolevPrior { coefficients, radius, nonneg_grid };
        if prior.coefficients.len() < 2 {
            return Err(Error::InvalidInput("Hermite truncation must be at least 1".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidInput("Sobolev radius must be positive".into()));
        }
        let norm = prior.normalization();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!("Hermite density integrates to {norm}, not 1")));
        }
        if let Some(&mu) = prior.nonneg_grid.iter().find(|&&mu| prior.density(mu) < -NONNEG_SLACK) {
            return Err(Error::InvalidInput(format!("Hermite density is negative at {mu}")));
        }
        let s = sobolev_quadratic(&prior.coefficients);
        if s > 2.0 * radius * (1.0 + 1e-8) {
            return Err(Error::InvalidInput(format!(
                "Sobolev ellipsoid violated: {s} > {}",
                2.0 * radius
            )));
        }
        Ok(prior)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn truncation(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn density(&self, mu: f64) -> f64 {
        dot(&self.coefficients, &hermite_functions(mu, self.truncation()))
    }

    pub fn normalization(&self) -> f64 {
        dot(&self.coefficients, &hermite_integrals(self.truncation()))
    }
}

/// 2 a_0^2 + a_1^2 + sum_{j>=1} [2 a_j^2 + (sqrt(j) a_{j-1} - sqrt(j+1) a_{j+1})^2].
pub fn sobolev_quadratic(alpha: &[f64]) -> f64 {
    sobolev_rows(alpha.len() - 1)
        .iter()
        .map(|r| r.dot(alpha).powi(2))
        .sum()
}

/// Rows R with ||R alpha||^2 equal to the b = 1 Sobolev quadratic form.
fn sobolev_rows(p: usize) -> Vec<SparseRow> {
    let a = |j: usize| if j <= p { Some(j) } else { None };
    let mut rows = vec![SparseRow::new(vec![(0, std::f64::consts::SQRT_2)])];
    rows.push(SparseRow::new(vec![(1, 1.0)]));
    for j in 1..=p {
        rows.push(SparseRow::new(vec![(j, std::f64::consts::SQRT_2)]));
    }
    for j in 1..=p + 1 {
        let mut e = Vec::new();
        if let Some(i) = a(j - 1) {
            e.push((i, (j as f64).sqrt()));
        }
        if let Some(i) = a(j + 1) {
            e.push((i, -((j + 1) as f64).sqrt()));
        }
        rows.push(SparseRow::new(e));
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Prior {
    GaussianMixture(GaussianMixturePrior),
    HermiteSobolev(HermiteSobolevPrior),
}

impl From<GaussianMixturePrior> for Prior {
    fn from(p: GaussianMixturePrior) -> Self {
        Prior::GaussianMixture(p)
    }
}

impl From<HermiteSobolevPrior> for Prior {
    fn from(p: HermiteSobolevPrior) -> Self {
        Prior::HermiteSobolev(p)
    }
}

impl Prior {
    pub fn marginal_density(&self, x: f64) -> f64 {
        match self {
            Prior::GaussianMixture(m) => {
                m.components.iter().map(|c| c.weight * c.marginal_density(x)).sum()
            }
            Prior::HermiteSobolev(h) => {
                dot(&h.coefficients, &hermite_convolutions(x, h.truncation()))
            }
        }
    }

    /// Effect-size density g(mu), when it exists.
    pub fn density(&self, mu: f64) -> Result<f64> {
        self.functional_value(&LinearFunctional::PriorDensityAt(mu))
    }

    pub fn bin_masses(&self, bins: &BinGrid) -> Vec<f64> {
        match self {
            Prior::GaussianMixture(m) => (0..bins.len())
                .map(|k| {
                    let (lo, hi) = bins.cell(k);
                    m.components.iter().map(|c| c.weight * c.bin_mass(lo, hi)).sum()
                })
                .collect(),
            Prior::HermiteSobolev(h) => hermite_bin_masses(h.truncation(), bins)
                .iter()
                .map(|row| dot(row, &h.coefficients))
                .collect(),
        }
    }

    pub fn functional_value(&self, f: &LinearFunctional) -> Result<f64> {
        match self {
            Prior::GaussianMixture(m) => {
                let mut total = 0.0;
                for c in &m.components {
                    if c.weight > 0.0 {
                        total += c.weight * c.functional_value(f)?;
                    }
                }
                Ok(total)
            }
            Prior::HermiteSobolev(h) => {
                Ok(dot(&h.coefficients, &hermite_functional_coefficients(h.truncation(), f)?))
            }
        }
    }
}

/// Coefficients c_j with L(sum alpha_j h_j) = sum_j c_j alpha_j.
pub fn hermite_functional_coefficients(p: usize, f: &LinearFunctional) -> Result<Vec<f64>> {
    Ok(match *f {
        LinearFunctional::MarginalDensityAt(x) => hermite_convolutions(x, p),
        LinearFunctional::PosteriorMeanNumerator(x) => {
            let c = hermite_convolutions(x, p + 1);
            (0..=p)
                .map(|j| {
                    let jf = j as f64;
                    let down = if j > 0 { (jf / 2.0).sqrt() * c[j - 1] } else { 0.0 };
                    down + ((jf + 1.0) / 2.0).sqrt() * c[j + 1]
                })
                .collect()
        }
        LinearFunctional::LfsrNumerator(x) => hermite_lfsr_numerators(x, p),
        LinearFunctional::PriorTailProb(t0) => hermite_tail_integrals(t0, p),
        LinearFunctional::PriorDensityAt(x0) => hermite_functions(x0, p),
        LinearFunctional::CalibratedDelta { target, theta_bar, f_bar } => {
            let a = hermite_functional_coefficients(p, &target.numerator())?;
            let fm = hermite_convolutions(target.x, p);
            a.iter().zip(&fm).map(|(a, fm)| (a - theta_bar * fm) / f_bar).collect()
        }
    })
}

/// Matrix (bins x (p+1)) of bin masses of phi * h_j.
pub fn hermite_bin_masses(p: usize, bins: &BinGrid) -> Vec<Vec<f64>> {
    let k = bins.len();
    let mut out = vec![vec![0.0; p + 1]; k];
    for (row, cell) in out.iter_mut().zip(0..k) {
        if bins.is_tail(cell) {
            continue;
        }
        let (lo, hi) = bins.cell(cell);
        let panels = ((hi - lo) / 0.5).ceil().max(1.0) as usize;
        let step = (hi - lo) / panels as f64;
        for q in 0..panels {
            let a = lo + step * q as f64;
            for (x, w) in gl64().mapped(a, a + step) {
                for (r, c) in row.iter_mut().zip(hermite_convolutions(x, p)) {
                    *r += w * c;
                }
            }
        }
    }
    let right = convolution_upper_tail(p, bins.upper());
    let left_mirror = convolution_upper_tail(p, -bins.lower());
    for j in 0..=p {
        out[k - 1][j] = right[j];
        out[0][j] = if j % 2 == 0 { left_mirror[j] } else { -left_mirror[j] };
    }
    out
}

/// Integral of (phi * h_j) over [a, infinity).
fn convolution_upper_tail(p: usize, a: f64) -> Vec<f64> {
    let reach = (4.0 * (p as f64 + 1.0)).sqrt() + 14.0;
    let lo = a.max(-reach);
    let hi = a.max(0.0) + reach;
    let mut out = vec![0.0; p + 1];
    let panels = ((hi - lo) / 0.5).ceil().max(1.0) as usize;
    let step = (hi - lo) / panels as f64;
    for q in 0..panels {
        let s = lo + step * q as f64;
        for (x, w) in gl32().mapped(s, s + step) {
            for (o, c) in out.iter_mut().zip(hermite_convolutions(x, p)) {
                *o += w * c;
            }
        }
    }
    out
}

/// JSON description of a prior class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorClassSpec {
    GaussMix {
        #[serde(default = "default_tau")]
        tau: f64,
        #[serde(default = "default_support")]
        support: f64,
        #[serde(default = "default_grid_points")]
        grid_points: usize,
    },
    Sobolev {
        #[serde(default = "default_order")]
        order: u32,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_truncation")]
        truncation: usize,
        #[serde(default = "default_nonneg_points")]
        nonneg_points: usize,
        #[serde(default = "default_nonneg_range")]
        nonneg_range: f64,
    },
}

fn default_tau() -> f64 {
    0.2
}
fn default_support() -> f64 {
    3.0
}
fn default_grid_points() -> usize {
    120
}
fn default_order() -> u32 {
    1
}
fn default_radius() -> f64 {
    0.5
}
fn default_truncation() -> usize {
    32
}
fn default_nonneg_points() -> usize {
    201
}
fn default_nonneg_range() -> f64 {
    8.0
}

impl Default for PriorClassSpec {
    fn default() -> Self {
        PriorClassSpec::GaussMix {
            tau: default_tau(),
            support: default_support(),
            grid_points: default_grid_points(),
        }
    }
}

/// Convex prior class with a finite-dimensional parametrization.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorClass {
    GaussianMixture { grid: LocationGrid, tau: f64 },
    HermiteSobolev { truncation: usize, radius: f64, nonneg_grid: Vec<f64> },
}

impl PriorClass {
    pub fn gaussian_mixture(grid: LocationGrid, tau: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidInput(format!("component sd must be >= 0, got {tau}")));
        }
        Ok(PriorClass::GaussianMixture { grid, tau })
    }

    pub fn hermite_sobolev(truncation: usize, radius: f64, nonneg_points: usize, nonneg_range: f64) -> Result<Self> {
        if truncation == 0 || !(radius > 0.0) || nonneg_points < 2 || !(nonneg_range > 0.0) {
            return Err(Error::InvalidInput(
                "Hermite class needs truncation >= 1, radius > 0 and a nonnegativity grid".into(),
            ));
        }
        let step = 2.0 * nonneg_range / (nonneg_points - 1) as f64;
        let nonneg_grid = (0..nonneg_points).map(|i| -nonneg_range + step * i as f64).collect();
        Ok(PriorClass::HermiteSobolev { truncation, radius, nonneg_grid })
    }

    pub fn from_spec(spec: &PriorClassSpec) -> Result<Self> {
        match *spec {
            PriorClassSpec::GaussMix { tau, support, grid_points } => {
                Self::gaussian_mixture(LocationGrid::new(support, grid_points)?, tau)
            }
            PriorClassSpec::Sobolev { order, radius, truncation, nonneg_points, nonneg_range } => {
                if order != 1 {
                    return Err(Error::Config(format!("Sobolev order {order} is not supported; use 1")));
                }
                Self::hermite_sobolev(truncation, radius, nonneg_points, nonneg_range)
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            PriorClass::GaussianMixture { grid, tau } => format!(
                "gauss_mix(tau={tau}, K={}, p={})",
                grid.half_width(),
                grid.resolution()
            ),
            PriorClass::HermiteSobolev { truncation, radius, nonneg_grid } => format!(
                "sobolev(b=1, C={radius}, p={truncation}, |T|={})",
                nonneg_grid.len()
            ),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorClass::GaussianMixture { grid, .. } => grid.len(),
            PriorClass::HermiteSobolev { truncation, .. } => truncation + 1,
        }
    }

    fn components(&self) -> Option<Vec<GaussianComponent>> {
        match self {
            PriorClass::GaussianMixture { grid, tau } => Some(
                grid.points()
                    .into_iter()
                    .map(|mean| GaussianComponent { weight: 1.0, mean, sd: *tau })
                    .collect(),
            ),
            PriorClass::HermiteSobolev { .. } => None,
        }
    }

    /// Coefficients c with L(G_theta) = c . theta.
    pub fn linear_form(&self, f: &LinearFunctional) -> Result<Vec<f64>> {
        match self {
            PriorClass::GaussianMixture { .. } => self
                .components()
                .unwrap()
                .iter()
                .map(|c| c.functional_value(f))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| match e {
                    Error::UnsupportedFunctional { functional, .. } => {
                        Error::UnsupportedFunctional { functional, class: self.name() }
                    }
                    other => other,
                }),
            PriorClass::HermiteSobolev { truncation, .. } => hermite_functional_coefficients(*truncation, f),
        }
    }

    /// Rows k, columns j: nu_{G_j}(k) for the basis element j.
    pub fn bin_mass_matrix(&self, bins: &BinGrid) -> Vec<Vec<f64>> {
        match self {
            PriorClass::GaussianMixture { .. } => {
                let comps = self.components().unwrap();
                (0..bins.len())
                    .map(|k| {
                        let (lo, hi) = bins.cell(k);
                        comps.iter().map(|c| c.bin_mass(lo, hi)).collect()
                    })
                    .collect()
            }
            PriorClass::HermiteSobolev { truncation, .. } => hermite_bin_masses(*truncation, bins),
        }
    }

    /// Constraints over the parameter vector (indices 0..dim) defining membership.
    pub fn membership_constraints(&self) -> Vec<Constraint> {
        match self {
            PriorClass::GaussianMixture { .. } => {
                let d = self.dim();
                let mut out: Vec<Constraint> = (0..d)
                    .map(|j| Constraint::Inequality { row: SparseRow::new(vec![(j, -1.0)]), rhs: 0.0 })
                    .collect();
                out.push(Constraint::Equality { row: SparseRow::dense(&vec![1.0; d]), rhs: 1.0 });
                out
            }
            PriorClass::HermiteSobolev { truncation, radius, nonneg_grid } => {
                let p = *truncation;
                let mut out = vec![Constraint::Equality {
                    row: SparseRow::dense(&hermite_integrals(p)),
                    rhs: 1.0,
                }];
                for &mu in nonneg_grid {
                    let h: Vec<f64> = hermite_functions(mu, p).iter().map(|v| -v).collect();
                    out.push(Constraint::Inequality { row: SparseRow::dense(&h), rhs: 0.0 });
                }
                let rows = sobolev_rows(p);
                out.push(Constraint::SecondOrderCone {
                    offsets: vec![0.0; rows.len()],
                    rows,
                    bound: SparseRow::default(),
                    bound_offset: (2.0 * radius).sqrt(),
                });
                out
            }
        }
    }

    /// Prior with the given parameters, cleaning solver round-off.
    pub fn prior_from_params(&self, theta: &[f64]) -> Result<Prior> {
        if theta.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.dim(),
                theta.len()
            )));
        }
        match self {
            PriorClass::GaussianMixture { grid, tau } => {
                let clipped: Vec<f64> = theta.iter().map(|w| w.max(0.0)).collect();
                let total: f64 = clipped.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::NumericFailure("mixture weights vanish".into()));
                }
                let w: Vec<f64> = clipped.iter().map(|w| w / total).collect();
                Ok(GaussianMixturePrior::on_grid(grid, *tau, &w)?.into())
            }
            PriorClass::HermiteSobolev { radius, nonneg_grid, truncation } => {
                let norm = dot(theta, &hermite_integrals(*truncation));
                if !(norm > 0.0) {
                    return Err(Error::NumericFailure("Hermite density has nonpositive mass".into()));
                }
                Ok(Prior::HermiteSobolev(HermiteSobolevPrior {
                    coefficients: theta.iter().map(|a| a / norm).collect(),
                    radius: *radius,
                    nonneg_grid: nonneg_grid.clone(),
                }))
            }
        }
    }

    /// Parameter vector of a prior expressed in this class's basis, if it is one.
    pub fn params_of(&self, prior: &Prior) -> Option<Vec<f64>> {
        match (self, prior) {
            (PriorClass::GaussianMixture { .. }, Prior::GaussianMixture(m)) => {
                let comps = self.components().unwrap();
                let mut w = vec![0.0; comps.len()];
                for c in m.components() {
                    let j = comps.iter().position(|g| {
                        (g.mean - c.mean).abs() < 1e-12 && (g.sd - c.sd).abs() < 1e-12
                    })?;
                    w[j] += c.weight;
                }
                Some(w)
            }
            (PriorClass::HermiteSobolev { truncation, .. }, Prior::HermiteSobolev(h))
                if h.truncation() == *truncation =>
            {
                Some(h.coefficients.clone())
            }
            _ => None,
        }
    }

    pub fn contains(&self, prior: &Prior, tol: f64) -> bool {
        match self.params_of(prior) {
            Some(theta) => self.membership_constraints().iter().all(|c| c.violation(&theta) <= tol),
            None => false,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn point_mass(mean: f64) -> Prior {
        GaussianMixturePrior::single(mean, 0.2).unwrap().into()
    }

    #[test]
    fn grid_points() {
        let g = LocationGrid::new(3.0, 120).unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 241);
        assert_eq!(pts[0], -3.0);
        assert_eq!(pts[120], 0.0);
        assert_eq!(pts[240], 3.0);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        for i in 0..241 {
            assert_abs_diff_eq!(pts[i], -pts[240 - i], epsilon = 1e-15);
        }
    }

    #[test]
    fn marginal_density_of_point_mass() {
        let g = point_mass(0.0);
        assert_abs_diff_eq!(
            g.marginal_density(0.0),
            1.0 / (2.0 * std::f64::consts::PI * 1.04).sqrt(),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(g.marginal_density(2.0), g.marginal_density(-2.0), epsilon = 1e-16);
    }

    #[test]
    fn bin_masses_examples() {
        let g = point_mass(0.0);
        let bins = BinGrid::from_breakpoints(vec![0.0]).unwrap();
        let m = g.bin_masses(&bins);
        assert_abs_diff_eq!(m[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m[1], 0.5, epsilon = 1e-15);

        let g = point_mass(2.0);
        let bins = BinGrid::default_grid();
        let m = g.bin_masses(&bins);
        let k19 = bins.locate(1.95);
        let k20 = bins.locate(2.05);
        let s = 1.04f64.sqrt();
        assert_abs_diff_eq!(
            m[k19] + m[k20],
            normal_cdf(0.1 / s) - normal_cdf(-0.1 / s),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(m.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tail_prob_and_odd_numerator() {
        let g = point_mass(1.5);
        assert_abs_diff_eq!(
            g.functional_value(&LinearFunctional::PriorTailProb(0.0)).unwrap(),
            1.0,
            epsilon = 1e-10
        );
        let g = point_mass(0.0);
        assert_abs_diff_eq!(
            g.functional_value(&LinearFunctional::PosteriorMeanNumerator(0.0)).unwrap(),
            0.0,
            epsilon = 1e-16
        );
        assert_eq!(
            g.functional_value(&LinearFunctional::MarginalDensityAt(0.0)).unwrap(),
            g.marginal_density(0.0)
        );
    }

    #[test]
    fn point_mass_components_without_density() {
        let g: Prior = GaussianMixturePrior::single(0.5, 0.0).unwrap().into();
        assert!(g.density(0.0).is_err());
        assert_abs_diff_eq!(g.marginal_density(0.5), normal_pdf(0.0), epsilon = 1e-16);
        assert_abs_diff_eq!(
            g.functional_value(&LinearFunctional::LfsrNumerator(1.0)).unwrap(),
            normal_pdf(0.5),
            epsilon = 1e-16
        );
    }

    #[test]
    fn hermite_h0_prior() {
        let c = std::f64::consts::PI.powf(0.25) / crate::special::SQRT_2PI;
        let class = PriorClass::hermite_sobolev(4, 0.5, 201, 8.0).unwrap();
        let prior = HermiteSobolevPrior::new(vec![c, 0.0, 0.0, 0.0, 0.0], 0.5, vec![0.0]).unwrap();
        let f0 = Prior::from(prior.clone()).marginal_density(0.0);
        assert_abs_diff_eq!(f0, c * 0.531_125_966_013_598_4, epsilon = 1e-12);
        // g = c h_0 is the N(0, 1) density, so f = N(0, 2)
        assert_abs_diff_eq!(f0, 1.0 / (4.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-12);
        let full = HermiteSobolevPrior { nonneg_grid: match &class {
            PriorClass::HermiteSobolev { nonneg_grid, .. } => nonneg_grid.clone(),
            _ => unreachable!(),
        }, ..prior };
        assert!(class.contains(&full.into(), 1e-8));
    }

    #[test]
    fn hermite_bin_masses_sum_to_one() {
        let c = std::f64::consts::PI.powf(0.25) / crate::special::SQRT_2PI;
        let prior: Prior = HermiteSobolevPrior::new(vec![c, 0.0, 0.0], 0.5, vec![]).unwrap().into();
        let nu = prior.bin_masses(&BinGrid::default_grid());
        assert_abs_diff_eq!(nu.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(nu[0], normal_cdf(-6.0 / 2f64.sqrt()), epsilon = 1e-12);
    }

    #[test]
    fn constraint_counts() {
        let class = PriorClass::gaussian_mixture(LocationGrid::new(1.0, 2).unwrap(), 0.2).unwrap();
        let c = class.membership_constraints();
        assert_eq!(c.iter().filter(|c| matches!(c, Constraint::Inequality { .. })).count(), 5);
        assert_eq!(c.iter().filter(|c| matches!(c, Constraint::Equality { .. })).count(), 1);

        let class = PriorClass::hermite_sobolev(4, 0.5, 201, 8.0).unwrap();
        let c = class.membership_constraints();
        assert_eq!(c.iter().filter(|c| matches!(c, Constraint::Equality { .. })).count(), 1);
        assert_eq!(c.iter().filter(|c| matches!(c, Constraint::Inequality { .. })).count(), 201);
        assert_eq!(c.iter().filter(|c| matches!(c, Constraint::SecondOrderCone { .. })).count(), 1);
    }

    #[test]
    fn sobolev_rows_reproduce_quadratic_form() {
        let alpha = [0.3, -0.2, 0.1, 0.05];
        let p = 3;
        let mut direct = 2.0 * alpha[0] * alpha[0] + alpha[1] * alpha[1];
        let a = |j: usize| if j <= p { alpha[j] } else { 0.0 };
        for j in 1..=p + 1 {
            direct += 2.0 * a(j) * a(j)
                + ((j as f64).sqrt() * a(j - 1) - ((j + 1) as f64).sqrt() * a(j + 1)).powi(2);
        }
        assert_abs_diff_eq!(sobolev_quadratic(&alpha), direct, epsilon = 1e-14);
    }

    #[test]
    fn spec_json_round_trip() {
        let s: PriorClassSpec =
            serde_json::from_str(r#"{"type":"gauss_mix","tau":0.2,"support":3.0,"grid_points":120}"#).unwrap();
        assert_eq!(s, PriorClassSpec::default());
        let s: PriorClassSpec = serde_json::from_str(
            r#"{"type":"sobolev","order":1,"radius":0.5,"truncation":32,"nonneg_points":201,"nonneg_range":8.0}"#,
        )
        .unwrap();
        let c = PriorClass::from_spec(&s).unwrap();
        assert_eq!(c.dim(), 33);
        let bad: PriorClassSpec = serde_json::from_str(r#"{"type":"sobolev","order":2}"#).unwrap();
        assert!(PriorClass::from_spec(&bad).is_err());
    }

    fn random_mixture() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 9).prop_filter("nonzero", |w| w.iter().sum::<f64>() > 1e-3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn functional_value_is_linear(w1 in random_mixture(), w2 in random_mixture(), lambda in 0.0f64..1.0, x in -3.0f64..3.0) {
            let grid = LocationGrid::new(2.0, 4).unwrap();
            let n1: Vec<f64> = w1.iter().map(|v| v / w1.iter().sum::<f64>()).collect();
            let n2: Vec<f64> = w2.iter().map(|v| v / w2.iter().sum::<f64>()).collect();
            let mix: Vec<f64> = n1.iter().zip(&n2).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            let g1: Prior = GaussianMixturePrior::on_grid(&grid, 0.3, &n1).unwrap().into();
            let g2: Prior = GaussianMixturePrior::on_grid(&grid, 0.3, &n2).unwrap().into();
            let gm: Prior = GaussianMixturePrior::on_grid(&grid, 0.3, &mix).unwrap().into();
            for f in [
                LinearFunctional::MarginalDensityAt(x),
                LinearFunctional::PosteriorMeanNumerator(x),
                LinearFunctional::LfsrNumerator(x),
                LinearFunctional::PriorTailProb(x),
                LinearFunctional::PriorDensityAt(x),
            ] {
                let lhs = gm.functional_value(&f).unwrap();
                let rhs = lambda * g1.functional_value(&f).unwrap() + (1.0 - lambda) * g2.functional_value(&f).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn lfsr_numerator_below_marginal(w in random_mixture(), x in -4.0f64..4.0) {
            let grid = LocationGrid::new(3.0, 4).unwrap();
            let n: Vec<f64> = w.iter().map(|v| v / w.iter().sum::<f64>()).collect();
            let g: Prior = GaussianMixturePrior::on_grid(&grid, 0.2, &n).unwrap().into();
            let f = g.marginal_density(x);
            let a = g.functional_value(&LinearFunctional::LfsrNumerator(x)).unwrap();
            prop_assert!(a <= f * (1.0 + 1e-12) && a >= 0.0);
        }

        #[test]
        fn bin_masses_are_a_distribution(w in random_mixture(), m in 0.5f64..8.0, n in 1usize..60) {
            let grid = LocationGrid::new(3.0, 4).unwrap();
            let nw: Vec<f64> = w.iter().map(|v| v / w.iter().sum::<f64>()).collect();
            let g: Prior = GaussianMixturePrior::on_grid(&grid, 0.2, &nw).unwrap().into();
            let nu = g.bin_masses(&BinGrid::uniform(m, n).unwrap());
            prop_assert!(nu.iter().all(|&v| v >= 0.0));
            prop_assert!((nu.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
