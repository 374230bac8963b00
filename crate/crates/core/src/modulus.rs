//! Discretized modulus of continuity, its hardest pair of priors, and the induced affine estimator.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::bins::BinGrid;
use crate::conic::{solve_with_retry, ConicProgram, ConicSolution, ConicStatus, Constraint, SparseRow};
use crate::error::{Error, Result};
use crate::functional::LinearFunctional;
use crate::pilot::PilotMarginal;
use crate::prior::{dot, Prior, PriorClass};

const MODULUS_LABEL: &str = "modulus";

/// A prior class together with its bin-mass matrix on a fixed grid.
#[derive(Debug, Clone)]
pub struct ClassDiscretization {
    class: PriorClass,
    bins: BinGrid,
    matrix: Vec<Vec<f64>>,
    factors: Option<LowRank>,
}

/// matrix ~= left * right with few columns in `left`; used to sparsify conic programs.
#[derive(Debug, Clone)]
struct LowRank {
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
}

impl LowRank {
    fn rank(&self) -> usize {
        self.right.len()
    }
}

fn low_rank(matrix: &[Vec<f64>]) -> Option<LowRank> {
    let (k, d) = (matrix.len(), matrix.first()?.len());
    let a = DMatrix::from_fn(k, d, |i, j| matrix[i][j]);
    let svd = a.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let s = svd.singular_values;
    let top = s.iter().cloned().fold(0.0, f64::max);
    let r = s.iter().filter(|&&v| v > 1e-14 * top).count();
    if 2 * r >= k.min(d) {
        return None;
    }
    let mut idx: Vec<usize> = (0..s.len()).filter(|&i| s[i] > 1e-14 * top).collect();
    idx.sort_unstable();
    let left = (0..k).map(|i| idx.iter().map(|&c| u[(i, c)] * s[c]).collect()).collect();
    let right = idx.iter().map(|&c| (0..d).map(|j| vt[(c, j)]).collect()).collect();
    Some(LowRank { left, right })
}

impl ClassDiscretization {
    pub fn new(class: PriorClass, bins: BinGrid) -> Self {
        let matrix = class.bin_mass_matrix(&bins);
        let factors = low_rank(&matrix);
        ClassDiscretization { class, bins, matrix, factors }
    }

    pub fn class(&self) -> &PriorClass {
        &self.class
    }

    pub fn bins(&self) -> &BinGrid {
        &self.bins
    }

    /// Bin masses nu_theta(k).
    pub fn masses(&self, theta: &[f64]) -> Vec<f64> {
        self.matrix.iter().map(|row| dot(row, theta)).collect()
    }

    /// A^T w, the parameter-space coefficients of sum_k w_k nu_theta(k).
    pub fn pull_back(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.class.dim()];
        for (row, &wk) in self.matrix.iter().zip(w) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += wk * a;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ModulusSolution {
    pub delta: f64,
    pub omega: f64,
    pub omega_prime: f64,
    pub binding: bool,
    /// chi-square type distance actually attained by the optimizers
    pub distance: f64,
    pub theta1: Vec<f64>,
    pub theta_m1: Vec<f64>,
    pub nu1: Vec<f64>,
    pub nu_m1: Vec<f64>,
    pub l1: f64,
    pub l_m1: f64,
    pub g1: Prior,
    pub g_m1: Prior,
}

/// Piecewise-constant affine estimator Q_0 + (1/m) sum_i Q(X_i).
#[derive(Debug, Clone)]
pub struct AffineEstimator {
    pub q0: f64,
    pub weights: Vec<f64>,
    pub max_bias: f64,
    pub variance_proxy: f64,
    pub delta: f64,
    pub omega: f64,
    pub omega_prime: f64,
    pub sample_size: usize,
    pub functional: String,
    pub class: String,
    pub pilot: String,
    bins: BinGrid,
}

impl AffineEstimator {
    pub fn bins(&self) -> &BinGrid {
        &self.bins
    }

    pub fn q(&self, x: f64) -> f64 {
        self.weights[self.bins.locate(x)]
    }

    pub fn estimate(&self, samples: &[f64]) -> f64 {
        let s: f64 = samples.iter().map(|&x| self.q(x)).sum();
        self.q0 + s / samples.len() as f64
    }

    /// E_G of the estimate given the bin masses of G.
    pub fn expectation(&self, nu: &[f64]) -> f64 {
        self.q0 + dot(&self.weights, nu)
    }

    /// Standard deviation of the estimate under G with bin masses nu and sample size m.
    pub fn standard_error(&self, nu: &[f64], m: usize) -> f64 {
        let mean = dot(&self.weights, nu);
        let second: f64 = self.weights.iter().zip(nu).map(|(q, n)| q * q * n).sum();
        ((second - mean * mean).max(0.0) / m as f64).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct WorstCaseBias {
    pub max_bias: f64,
    pub min_bias: f64,
    pub argmax: Prior,
    pub argmin: Prior,
}

impl WorstCaseBias {
    pub fn magnitude(&self) -> f64 {
        self.max_bias.max(-self.min_bias)
    }
}

/// Modulus problem for one functional over a (possibly localized) class.
#[derive(Debug, Clone)]
pub struct ModulusProblem<'a> {
    disc: &'a ClassDiscretization,
    pilot: &'a PilotMarginal,
    functional: LinearFunctional,
    form: Vec<f64>,
    localized: bool,
}

impl<'a> ModulusProblem<'a> {
    pub fn new(
        disc: &'a ClassDiscretization,
        pilot: &'a PilotMarginal,
        functional: LinearFunctional,
        localized: bool,
    ) -> Result<Self> {
        if pilot.bins() != disc.bins() {
            return Err(Error::InvalidInput("pilot and class use different bin grids".into()));
        }
        if pilot.nu_bar().iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidInput("pilot bin masses must be positive".into()));
        }
        let form = disc.class().linear_form(&functional)?;
        Ok(ModulusProblem { disc, pilot, functional, form, localized })
    }

    /// Problem for a constant-offset custom linear form (used for stubs and oracles).
    pub fn with_form(
        disc: &'a ClassDiscretization,
        pilot: &'a PilotMarginal,
        functional: LinearFunctional,
        form: Vec<f64>,
        localized: bool,
    ) -> Result<Self> {
        let mut p = Self::new(disc, pilot, functional, localized)?;
        if form.len() != disc.class().dim() {
            return Err(Error::InvalidInput("linear form has the wrong dimension".into()));
        }
        p.form = form;
        Ok(p)
    }

    pub fn functional(&self) -> &LinearFunctional {
        &self.functional
    }

    pub fn form(&self) -> &[f64] {
        &self.form
    }

    pub fn pilot(&self) -> &PilotMarginal {
        self.pilot
    }

    pub fn discretization(&self) -> &ClassDiscretization {
        self.disc
    }

    pub fn is_localized(&self) -> bool {
        self.localized
    }

    pub fn localized(&self, localized: bool) -> Self {
        ModulusProblem { localized, ..self.clone() }
    }

    fn dims(&self) -> (usize, usize) {
        (self.disc.class().dim(), self.disc.bins().len())
    }

    /// Program over (theta_1, theta_-1, nu_1, nu_-1, [y_1, y_-1]); `delta = None` drops the distance cone.
    pub fn program(&self, delta: Option<f64>) -> ConicProgram {
        let (d, k) = self.dims();
        let r = self.disc.factors.as_ref().map_or(0, |f| f.rank());
        let n = 2 * d + 2 * k + 2 * r;
        let mut prog = ConicProgram::new(n);
        let mut c = vec![0.0; n];
        c[..d].copy_from_slice(&self.form);
        for (ci, f) in c[d..2 * d].iter_mut().zip(&self.form) {
            *ci = -f;
        }
        prog.set_objective(c).expect("objective length");

        let membership = self.disc.class().membership_constraints();
        for copy in 0..2 {
            let offset = copy * d;
            prog.add_all(membership.iter().map(|m| m.shifted(offset)));
            self.link_masses(&mut prog, offset, 2 * d + copy * k, 2 * d + 2 * k + copy * r);
        }
        if let Some(delta) = delta {
            let rows = (0..k)
                .map(|kk| SparseRow::new(vec![(2 * d + kk, 1.0), (2 * d + k + kk, -1.0)]))
                .collect::<Vec<_>>();
            prog.add_labeled(
                MODULUS_LABEL,
                Constraint::SecondOrderCone {
                    offsets: vec![0.0; k],
                    rows,
                    bound: SparseRow::default(),
                    bound_offset: delta,
                },
            )
            .expect("unique label");
        }
        prog
    }

    /// Links scaled masses u_k = nu_k / sqrt(nu_bar_k) to theta, through y = R theta, u = L y when the
    /// mass matrix has low rank, and bounds u by the localization when it is active.
    fn link_masses(&self, prog: &mut ConicProgram, theta: usize, nu: usize, y: usize) {
        let scale: Vec<f64> = self.pilot.nu_bar().iter().map(|v| 1.0 / v.sqrt()).collect();
        let dense = |coefs: &[f64], offset: usize, extra: (usize, f64)| {
            let mut e: Vec<(usize, f64)> = coefs
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, &v)| (offset + j, v))
                .collect();
            e.push(extra);
            Constraint::Equality { row: SparseRow::new(e), rhs: 0.0 }
        };
        match &self.disc.factors {
            None => {
                for (kk, row) in self.disc.matrix.iter().enumerate() {
                    let row: Vec<f64> = row.iter().map(|v| v * scale[kk]).collect();
                    prog.add(dense(&row, theta, (nu + kk, -1.0)));
                }
            }
            Some(f) => {
                for (i, row) in f.right.iter().enumerate() {
                    prog.add(dense(row, theta, (y + i, -1.0)));
                }
                for (kk, row) in f.left.iter().enumerate() {
                    let row: Vec<f64> = row.iter().map(|v| v * scale[kk]).collect();
                    prog.add(dense(&row, y, (nu + kk, -1.0)));
                }
            }
        }
        if self.localized {
            for (kk, s) in scale.iter().enumerate() {
                let (center, radius) = (self.pilot.nu_bar()[kk], self.pilot.radius(kk));
                prog.add(Constraint::Inequality { row: SparseRow::new(vec![(nu + kk, 1.0)]), rhs: (center + radius) * s });
                prog.add(Constraint::Inequality { row: SparseRow::new(vec![(nu + kk, -1.0)]), rhs: (radius - center) * s });
            }
        }
    }

    fn run(&self, delta: Option<f64>) -> Result<ConicSolution> {
        let sol = solve_with_retry(&self.program(delta))?;
        match sol.status {
            ConicStatus::Optimal => Ok(sol),
            ConicStatus::Infeasible => Err(Error::EmptyLocalizedClass { radius: self.pilot.c_m() }),
            ConicStatus::Unbounded => Err(Error::Unbounded),
            ConicStatus::NumericFailure => Err(Error::NumericFailure(format!(
                "modulus solve for {} at delta {:?} (residual {:.2e}, gap {:.2e})",
                self.functional.label(),
                delta,
                sol.residual,
                sol.relative_gap
            ))),
        }
    }

    fn distance(&self, nu1: &[f64], nu_m1: &[f64]) -> f64 {
        nu1.iter()
            .zip(nu_m1)
            .zip(self.pilot.nu_bar())
            .map(|((a, b), n)| (a - b) * (a - b) / n)
            .sum::<f64>()
            .sqrt()
    }

    pub fn solve(&self, delta: f64) -> Result<ModulusSolution> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
        }
        let sol = self.run(Some(delta))?;
        let (d, k) = self.dims();
        let x = &sol.primal;
        let theta1 = x[..d].to_vec();
        let theta_m1 = x[d..2 * d].to_vec();
        let nu1 = self.disc.masses(&theta1);
        let nu_m1 = self.disc.masses(&theta_m1);
        debug_assert_eq!(nu1.len(), k);
        let l1 = dot(&self.form, &theta1);
        let l_m1 = dot(&self.form, &theta_m1);
        let distance = self.distance(&nu1, &nu_m1);
        let binding = distance >= delta * (1.0 - 1e-5);
        let omega_prime = if binding { sol.dual(MODULUS_LABEL).unwrap_or(0.0).max(0.0) } else { 0.0 };
        let class = self.disc.class();
        Ok(ModulusSolution {
            delta,
            omega: l1 - l_m1,
            omega_prime,
            binding,
            distance,
            g1: class.prior_from_params(&theta1)?,
            g_m1: class.prior_from_params(&theta_m1)?,
            theta1,
            theta_m1,
            nu1,
            nu_m1,
            l1,
            l_m1,
        })
    }

    /// Distance between the optimizers of the unconstrained-distance problem.
    pub fn delta_max(&self) -> Result<f64> {
        let sol = self.run(None)?;
        let d = self.disc.class().dim();
        let nu1 = self.disc.masses(&sol.primal[..d]);
        let nu_m1 = self.disc.masses(&sol.primal[d..2 * d]);
        Ok(self.distance(&nu1, &nu_m1))
    }

    /// Estimator with weights from the hardest pair, evaluated on samples of size m.
    pub fn build_estimator(&self, solution: &ModulusSolution, m: usize) -> Result<AffineEstimator> {
        let delta = solution.delta;
        if !(delta > 0.0) {
            return Err(Error::InvalidInput("delta must be positive".into()));
        }
        if m == 0 {
            return Err(Error::InvalidInput("sample size must be positive".into()));
        }
        let nu_bar = self.pilot.nu_bar();
        let scale = solution.omega_prime / delta;
        let weights: Vec<f64> = (0..nu_bar.len())
            .map(|k| scale * (solution.nu1[k] - solution.nu_m1[k]) / nu_bar[k])
            .collect();
        let cross: f64 = (0..nu_bar.len())
            .map(|k| {
                (solution.nu1[k] - solution.nu_m1[k]) * (solution.nu1[k] + solution.nu_m1[k]) / (2.0 * nu_bar[k])
            })
            .sum();
        let q0 = 0.5 * (solution.l1 + solution.l_m1) - scale * cross;
        let raw_bias = 0.5 * (solution.omega - delta * solution.omega_prime);
        if raw_bias < -1e-6 * solution.omega.abs().max(1e-3) {
            return Err(Error::NumericFailure(format!("negative worst-case bias {raw_bias}")));
        }
        let gamma = solution.omega_prime.powi(2) / m as f64;
        let direct: f64 = weights.iter().zip(nu_bar).map(|(q, n)| q * q * n).sum::<f64>() / m as f64;
        if (direct - gamma).abs() > 1e-4 * gamma + 1e-12 {
            return Err(Error::NumericFailure(format!(
                "variance identity fails: {direct} vs {gamma}"
            )));
        }
        Ok(AffineEstimator {
            q0,
            weights,
            max_bias: raw_bias.max(0.0),
            variance_proxy: gamma,
            delta,
            omega: solution.omega,
            omega_prime: solution.omega_prime,
            sample_size: m,
            functional: self.functional.label(),
            class: self.disc.class().name(),
            pilot: self.pilot.fingerprint(),
            bins: self.disc.bins().clone(),
        })
    }

    /// Extremes over the class (localized per `self`) of offset + e.theta - L(theta).
    pub fn worst_case_bias_linear(&self, offset: f64, expectation: &[f64]) -> Result<WorstCaseBias> {
        let d = self.disc.class().dim();
        if expectation.len() != d {
            return Err(Error::InvalidInput("expectation coefficients have the wrong dimension".into()));
        }
        let coef: Vec<f64> = expectation.iter().zip(&self.form).map(|(e, l)| e - l).collect();
        let (k, r) = (self.disc.bins().len(), self.disc.factors.as_ref().map_or(0, |f| f.rank()));
        let n = if self.localized { d + k + r } else { d };
        let mut prog = ConicProgram::new(n);
        prog.add_all(self.disc.class().membership_constraints());
        if self.localized {
            self.link_masses(&mut prog, 0, d, d + k);
        }
        let mut extremes = Vec::with_capacity(2);
        for sign in [1.0, -1.0] {
            let mut obj = vec![0.0; n];
            for (o, c) in obj.iter_mut().zip(&coef) {
                *o = sign * c;
            }
            prog.set_objective(obj)?;
            let sol = solve_with_retry(&prog)?;
            let theta = &sol.primal[..d];
            match sol.status {
                ConicStatus::Optimal => {}
                ConicStatus::Infeasible => return Err(Error::EmptyLocalizedClass { radius: self.pilot.c_m() }),
                ConicStatus::Unbounded => return Err(Error::Unbounded),
                ConicStatus::NumericFailure => {
                    return Err(Error::NumericFailure("worst-case bias program".into()))
                }
            }
            let value = offset + dot(&coef, theta);
            extremes.push((value, self.disc.class().prior_from_params(theta)?));
        }
        let (min_bias, argmin) = extremes.pop().unwrap();
        let (max_bias, argmax) = extremes.pop().unwrap();
        Ok(WorstCaseBias { max_bias, min_bias, argmax, argmin })
    }

    pub fn worst_case_bias(&self, estimator: &AffineEstimator) -> Result<WorstCaseBias> {
        if estimator.bins() != self.disc.bins() {
            return Err(Error::InvalidInput("estimator and class use different bins".into()));
        }
        let e = self.disc.pull_back(&estimator.weights);
        self.worst_case_bias_linear(estimator.q0, &e)
    }
}

/// Hardest priors and their marginals on a grid: rows (x, g1, g_-1, f_g1, f_g-1).
pub fn hardest_prior_table(solution: &ModulusSolution, xs: &[f64]) -> Result<Vec<[f64; 5]>> {
    xs.iter()
        .map(|&x| {
            Ok([
                x,
                solution.g1.density(x)?,
                solution.g_m1.density(x)?,
                solution.g1.marginal_density(x),
                solution.g_m1.marginal_density(x),
            ])
        })
        .collect()
}

pub fn hardest_prior_csv(rows: &[[f64; 5]]) -> String {
    let mut out = String::from("x,g1,gm1,f_g1,f_gm1\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r[0], r[1], r[2], r[3], r[4]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{GaussianMixturePrior, LocationGrid};
    use approx::assert_abs_diff_eq;

    fn setup(p: usize, c_m: f64) -> (ClassDiscretization, PilotMarginal) {
        let class = PriorClass::gaussian_mixture(LocationGrid::new(3.0, p).unwrap(), 0.2).unwrap();
        let bins = BinGrid::uniform(6.0, 24).unwrap();
        let truth: Prior = GaussianMixturePrior::new(vec![
            crate::prior::GaussianComponent { weight: 0.5, mean: -1.5, sd: 0.2 },
            crate::prior::GaussianComponent { weight: 0.5, mean: 1.5, sd: 0.2 },
        ])
        .unwrap()
        .into();
        let pilot = PilotMarginal::oracle(&truth, &bins, c_m, 1000).unwrap();
        (ClassDiscretization::new(class, bins), pilot)
    }

    #[test]
    fn localization_counts() {
        let (disc, pilot) = setup(4, 0.02);
        let p = ModulusProblem::new(&disc, &pilot, LinearFunctional::MarginalDensityAt(0.0), true).unwrap();
        let q = p.localized(false);
        let (e1, i1, s1) = p.program(Some(0.1)).count();
        let (e0, i0, s0) = q.program(Some(0.1)).count();
        assert_eq!(e1, e0);
        assert_eq!(s1, 1);
        assert_eq!(s0, 1);
        assert_eq!(i1 - i0, 2 * 2 * disc.bins().len());
    }

    #[test]
    fn identities_at_a_binding_delta() {
        let (disc, pilot) = setup(12, 0.02);
        let p = ModulusProblem::new(&disc, &pilot, LinearFunctional::PosteriorMeanNumerator(1.0), true).unwrap();
        let sol = p.solve(0.05).unwrap();
        assert!(sol.binding);
        let est = p.build_estimator(&sol, 1000).unwrap();
        let b1 = est.expectation(&sol.nu1) - sol.l1;
        let bm1 = est.expectation(&sol.nu_m1) - sol.l_m1;
        assert_abs_diff_eq!(b1, -est.max_bias, epsilon = 1e-6);
        assert_abs_diff_eq!(bm1, est.max_bias, epsilon = 1e-6);
        let wc = p.worst_case_bias(&est).unwrap();
        assert_abs_diff_eq!(wc.max_bias, est.max_bias, epsilon = 1e-6);
        assert!(p.localized(false).worst_case_bias(&est).unwrap().max_bias >= wc.max_bias - 1e-9);
    }

    #[test]
    fn slack_delta_gives_zero_weights() {
        let (disc, pilot) = setup(8, 0.02);
        let p = ModulusProblem::new(&disc, &pilot, LinearFunctional::MarginalDensityAt(0.0), true).unwrap();
        let dmax = p.delta_max().unwrap();
        let sol = p.solve(2.0 * dmax + 1.0).unwrap();
        assert!(!sol.binding);
        let est = p.build_estimator(&sol, 100).unwrap();
        assert!(est.weights.iter().all(|&q| q == 0.0));
        assert_abs_diff_eq!(est.q0, 0.5 * (sol.l1 + sol.l_m1), epsilon = 1e-15);
        assert_eq!(est.variance_proxy, 0.0);
    }

    #[test]
    fn constant_functional_has_zero_modulus() {
        let (disc, pilot) = setup(4, 0.05);
        let form = vec![0.7; disc.class().dim()];
        let p = ModulusProblem::with_form(&disc, &pilot, LinearFunctional::PriorTailProb(-100.0), form, true).unwrap();
        let sol = p.solve(0.1).unwrap();
        assert_abs_diff_eq!(sol.omega, 0.0, epsilon = 1e-7);
        let est = p.build_estimator(&sol, 100).unwrap();
        assert!(est.weights.iter().all(|q| q.abs() < 1e-6));
        assert!(est.max_bias < 1e-7);
    }

    #[test]
    fn hardest_prior_csv_has_header() {
        let (disc, pilot) = setup(4, 0.05);
        let p = ModulusProblem::new(&disc, &pilot, LinearFunctional::MarginalDensityAt(0.0), true).unwrap();
        let sol = p.solve(0.05).unwrap();
        let rows = hardest_prior_table(&sol, &[0.0, 1.0]).unwrap();
        let csv = hardest_prior_csv(&rows);
        assert!(csv.starts_with("x,g1,gm1,f_g1,f_gm1\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
