//! Linear/second-order-cone programs and a solver backed by an interior-point method.

use std::collections::HashMap;
use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::{Error, Result};

/// Sparse linear form over the program variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRow {
    entries: Vec<(usize, f64)>,
}

impl SparseRow {
    /// Duplicated indices are summed; exact zeros dropped.
    pub fn new(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        SparseRow { entries: merged }
    }

    pub fn dense(coefficients: &[f64]) -> Self {
        Self::dense_at(coefficients, 0)
    }

    /// Dense coefficients placed at variables offset..offset+len.
    pub fn dense_at(coefficients: &[f64], offset: usize) -> Self {
        SparseRow {
            entries: coefficients
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, &v)| (i + offset, v))
                .collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * x[i]).sum()
    }

    pub fn shifted(&self, offset: usize) -> Self {
        SparseRow { entries: self.entries.iter().map(|&(i, v)| (i + offset, v)).collect() }
    }

    fn max_index(&self) -> Option<usize> {
        self.entries.iter().map(|e| e.0).max()
    }

    fn fmt_terms(&self) -> String {
        if self.entries.is_empty() {
            return "0".to_string();
        }
        self.entries.iter().map(|(i, v)| format!("{v:+e}*x{i}")).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// a.x = b
    Equality { row: SparseRow, rhs: f64 },
    /// a.x <= b
    Inequality { row: SparseRow, rhs: f64 },
    /// ||(r_i.x + d_i)_i|| <= g.x + e
    SecondOrderCone { rows: Vec<SparseRow>, offsets: Vec<f64>, bound: SparseRow, bound_offset: f64 },
}

impl Constraint {
    pub fn shifted(&self, offset: usize) -> Self {
        match self {
            Constraint::Equality { row, rhs } => Constraint::Equality { row: row.shifted(offset), rhs: *rhs },
            Constraint::Inequality { row, rhs } => Constraint::Inequality { row: row.shifted(offset), rhs: *rhs },
            Constraint::SecondOrderCone { rows, offsets, bound, bound_offset } => Constraint::SecondOrderCone {
                rows: rows.iter().map(|r| r.shifted(offset)).collect(),
                offsets: offsets.clone(),
                bound: bound.shifted(offset),
                bound_offset: *bound_offset,
            },
        }
    }

    /// Scaled violation at x; zero when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::Equality { row, rhs } => (row.dot(x) - rhs).abs() / (1.0 + rhs.abs()),
            Constraint::Inequality { row, rhs } => (row.dot(x) - rhs).max(0.0) / (1.0 + rhs.abs()),
            Constraint::SecondOrderCone { rows, offsets, bound, bound_offset } => {
                let norm = rows
                    .iter()
                    .zip(offsets)
                    .map(|(r, d)| (r.dot(x) + d).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let t = bound.dot(x) + bound_offset;
                (norm - t).max(0.0) / (1.0 + bound_offset.abs())
            }
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            Constraint::Equality { row, .. } | Constraint::Inequality { row, .. } => row.max_index(),
            Constraint::SecondOrderCone { rows, bound, .. } => {
                rows.iter().filter_map(|r| r.max_index()).chain(bound.max_index()).max()
            }
        }
    }

    fn kind_order(&self) -> u8 {
        match self {
            Constraint::Equality { .. } => 0,
            Constraint::Inequality { .. } => 1,
            Constraint::SecondOrderCone { .. } => 2,
        }
    }
}

/// maximize c.x subject to a list of (optionally labeled) constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    n: usize,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    labels: Vec<Option<String>>,
}

impl ConicProgram {
    pub fn new(n: usize) -> Self {
        ConicProgram { n, objective: vec![0.0; n], constraints: Vec::new(), labels: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn set_objective(&mut self, c: Vec<f64>) -> Result<()> {
        if c.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "objective has length {} but program has {} variables",
                c.len(),
                self.n
            )));
        }
        self.objective = c;
        Ok(())
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn add(&mut self, constraint: Constraint) {
        self.constraints.push(constraint);
        self.labels.push(None);
    }

    pub fn add_all<I: IntoIterator<Item = Constraint>>(&mut self, constraints: I) {
        for c in constraints {
            self.add(c);
        }
    }

    pub fn add_labeled(&mut self, label: &str, constraint: Constraint) -> Result<()> {
        if self.labels.iter().any(|l| l.as_deref() == Some(label)) {
            return Err(Error::InvalidInput(format!("duplicate constraint label `{label}`")));
        }
        self.constraints.push(constraint);
        self.labels.push(Some(label.to_string()));
        Ok(())
    }

    pub fn count(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for k in &self.constraints {
            match k {
                Constraint::Equality { .. } => c.0 += 1,
                Constraint::Inequality { .. } => c.1 += 1,
                Constraint::SecondOrderCone { .. } => c.2 += 1,
            }
        }
        c
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("program has no variables".into()));
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if let Some(i) = c.max_index() {
                if i >= self.n {
                    return Err(Error::InvalidInput(format!(
                        "constraint {k} references variable {i} of {}",
                        self.n
                    )));
                }
            }
            if let Constraint::SecondOrderCone { rows, offsets, .. } = c {
                if rows.len() != offsets.len() {
                    return Err(Error::InvalidInput(format!("cone {k} has mismatched offsets")));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump, one constraint per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vars {}", self.n);
        let _ = writeln!(out, "maximize {}", SparseRow::dense(&self.objective).fmt_terms());
        for (c, label) in self.constraints.iter().zip(&self.labels) {
            let label = label.as_deref().unwrap_or("-");
            let _ = match c {
                Constraint::Equality { row, rhs } => {
                    writeln!(out, "eq {label} : {} = {rhs:e}", row.fmt_terms())
                }
                Constraint::Inequality { row, rhs } => {
                    writeln!(out, "le {label} : {} <= {rhs:e}", row.fmt_terms())
                }
                Constraint::SecondOrderCone { rows, offsets, bound, bound_offset } => {
                    let parts: Vec<String> = rows
                        .iter()
                        .zip(offsets)
                        .map(|(r, d)| format!("[{} {d:+e}]", r.fmt_terms()))
                        .collect();
                    writeln!(
                        out,
                        "soc {label} : norm({}) <= {} {bound_offset:+e}",
                        parts.join(", "),
                        bound.fmt_terms()
                    )
                }
            };
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericFailure,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: ConicStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
    pub relative_gap: f64,
    pub residual: f64,
    duals: HashMap<String, f64>,
}

impl ConicSolution {
    /// Sensitivity of the optimal value to the right-hand side of a labeled constraint.
    /// For a cone this is the multiplier of its bound row.
    pub fn dual(&self, label: &str) -> Option<f64> {
        self.duals.get(label).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub solver_tol: f64,
    pub accept_tol: f64,
    pub max_iter: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { solver_tol: 1e-9, accept_tol: 1e-7, max_iter: 200 }
    }
}

impl SolverOptions {
    pub fn loosened() -> Self {
        SolverOptions { solver_tol: 1e-7, accept_tol: 1e-5, max_iter: 400 }
    }
}

pub fn solve(program: &ConicProgram) -> Result<ConicSolution> {
    solve_with_options(program, &SolverOptions::default())
}

/// Solves once at default tolerances and retries once with loosened tolerances on numeric failure.
pub fn solve_with_retry(program: &ConicProgram) -> Result<ConicSolution> {
    let first = solve(program)?;
    if first.status != ConicStatus::NumericFailure {
        return Ok(first);
    }
    solve_with_options(program, &SolverOptions::loosened())
}

pub fn solve_with_options(program: &ConicProgram, options: &SolverOptions) -> Result<ConicSolution> {
    program.validate()?;
    let n = program.n;

    let mut order: Vec<usize> = (0..program.constraints.len()).collect();
    order.sort_by_key(|&k| program.constraints[k].kind_order());

    let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut first_row = vec![0usize; program.constraints.len()];
    let mut push_row = |row: &SparseRow, sign: f64, rhs: f64, b: &mut Vec<f64>| {
        let r = b.len();
        for &(j, v) in row.entries() {
            ri.push(r);
            ci.push(j);
            vals.push(sign * v);
        }
        b.push(rhs);
        r
    };
    for &k in &order {
        match &program.constraints[k] {
            Constraint::Equality { row, rhs } => {
                first_row[k] = push_row(row, 1.0, *rhs, &mut b);
                push_cone(&mut cones, SupportedConeT::ZeroConeT(1));
            }
            Constraint::Inequality { row, rhs } => {
                first_row[k] = push_row(row, 1.0, *rhs, &mut b);
                push_cone(&mut cones, SupportedConeT::NonnegativeConeT(1));
            }
            Constraint::SecondOrderCone { rows, offsets, bound, bound_offset } => {
                first_row[k] = push_row(bound, -1.0, *bound_offset, &mut b);
                for (r, d) in rows.iter().zip(offsets) {
                    push_row(r, -1.0, *d, &mut b);
                }
                cones.push(SupportedConeT::SecondOrderConeT(rows.len() + 1));
            }
        }
    }
    let m = b.len();
    let a = CscMatrix::new_from_triplets(m, n, ri, ci, vals);
    let p = CscMatrix::zeros((n, n));
    let q: Vec<f64> = program.objective.iter().map(|c| -c).collect();

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(options.max_iter)
        .tol_gap_abs(options.solver_tol)
        .tol_gap_rel(options.solver_tol)
        .tol_feas(options.solver_tol)
        .presolve_enable(false)
        .build()
        .map_err(|e| Error::NumericFailure(format!("solver settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
        .map_err(|e| Error::InvalidInput(format!("solver setup: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let primal = sol.x.clone();
    let objective = program.objective.iter().zip(&primal).map(|(c, x)| c * x).sum::<f64>();
    let residual = program
        .constraints
        .iter()
        .map(|c| c.violation(&primal))
        .fold(0.0, f64::max);
    let relative_gap = (sol.obj_val - sol.obj_val_dual).abs() / objective.abs().max(1.0);

    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            let ok = residual.is_finite()
                && residual <= options.accept_tol
                && relative_gap <= options.accept_tol;
            if ok {
                ConicStatus::Optimal
            } else {
                ConicStatus::NumericFailure
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => ConicStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => ConicStatus::Unbounded,
        _ => ConicStatus::NumericFailure,
    };

    let mut duals = HashMap::new();
    for (k, label) in program.labels.iter().enumerate() {
        if let Some(l) = label {
            duals.insert(l.clone(), sol.z[first_row[k]]);
        }
    }
    Ok(ConicSolution { status, primal, objective, relative_gap, residual, duals })
}

fn push_cone(cones: &mut Vec<SupportedConeT<f64>>, cone: SupportedConeT<f64>) {
    match (cones.last_mut(), &cone) {
        (Some(SupportedConeT::ZeroConeT(k)), SupportedConeT::ZeroConeT(1)) => *k += 1,
        (Some(SupportedConeT::NonnegativeConeT(k)), SupportedConeT::NonnegativeConeT(1)) => *k += 1,
        _ => cones.push(cone),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ineq(entries: Vec<(usize, f64)>, rhs: f64) -> Constraint {
        Constraint::Inequality { row: SparseRow::new(entries), rhs }
    }

    #[test]
    fn unit_ball() {
        let mut p = ConicProgram::new(1);
        p.set_objective(vec![1.0]).unwrap();
        p.add_labeled(
            "ball",
            Constraint::SecondOrderCone {
                rows: vec![SparseRow::new(vec![(0, 1.0)])],
                offsets: vec![0.0],
                bound: SparseRow::default(),
                bound_offset: 1.0,
            },
        )
        .unwrap();
        let s = solve(&p).unwrap();
        assert_eq!(s.status, ConicStatus::Optimal);
        assert_abs_diff_eq!(s.primal[0], 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s.dual("ball").unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn simplex_lp() {
        let mut p = ConicProgram::new(3);
        p.set_objective(vec![1.0, 1.0, 0.0]).unwrap();
        for i in 0..3 {
            p.add(ineq(vec![(i, -1.0)], 0.0));
        }
        p.add(Constraint::Equality { row: SparseRow::dense(&[1.0, 1.0, 1.0]), rhs: 1.0 });
        let s = solve(&p).unwrap();
        assert_eq!(s.status, ConicStatus::Optimal);
        assert_abs_diff_eq!(s.objective, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn infeasible_lp() {
        let mut p = ConicProgram::new(1);
        p.set_objective(vec![1.0]).unwrap();
        p.add(ineq(vec![(0, 1.0)], 0.0));
        p.add(ineq(vec![(0, -1.0)], -1.0));
        assert_eq!(solve(&p).unwrap().status, ConicStatus::Infeasible);
    }

    #[test]
    fn unbounded_lp() {
        let mut p = ConicProgram::new(1);
        p.set_objective(vec![1.0]).unwrap();
        p.add(ineq(vec![(0, -1.0)], 0.0));
        assert_eq!(solve(&p).unwrap().status, ConicStatus::Unbounded);
    }

    #[test]
    fn inequality_dual_is_rhs_sensitivity() {
        // max x0 + 2 x1 s.t. x0 + x1 <= 1, x >= 0: optimum 2, price of the budget 2
        let mut p = ConicProgram::new(2);
        p.set_objective(vec![1.0, 2.0]).unwrap();
        p.add_labeled("budget", ineq(vec![(0, 1.0), (1, 1.0)], 1.0)).unwrap();
        p.add(ineq(vec![(0, -1.0)], 0.0));
        p.add(ineq(vec![(1, -1.0)], 0.0));
        let s = solve(&p).unwrap();
        assert_abs_diff_eq!(s.objective, 2.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s.dual("budget").unwrap(), 2.0, epsilon = 1e-6);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let mut p = ConicProgram::new(1);
        p.add_labeled("a", ineq(vec![(0, 1.0)], 1.0)).unwrap();
        assert!(p.add_labeled("a", ineq(vec![(0, 1.0)], 1.0)).is_err());
    }

    #[test]
    fn malformed_program_rejected() {
        let mut p = ConicProgram::new(1);
        p.add(ineq(vec![(3, 1.0)], 1.0));
        assert!(solve(&p).is_err());
        assert!(solve(&ConicProgram::new(0)).is_err());
    }

    #[test]
    fn dump_has_one_line_per_constraint() {
        let mut p = ConicProgram::new(2);
        p.set_objective(vec![1.0, 0.0]).unwrap();
        p.add(ineq(vec![(0, 1.0)], 1.0));
        p.add_labeled("eq", Constraint::Equality { row: SparseRow::dense(&[1.0, -1.0]), rhs: 0.0 }).unwrap();
        let text = p.dump();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().any(|l| l.starts_with("eq eq :")));
    }

    /// Best objective over vertices: every n-subset of tight constraints solved by Gaussian elimination.
    fn vertex_enumeration(c: &[f64], rows: &[Vec<f64>], rhs: &[f64]) -> f64 {
        let n = c.len();
        let m = rows.len();
        let mut best = f64::NEG_INFINITY;
        let mut subset: Vec<usize> = (0..n).collect();
        loop {
            let mut a: Vec<Vec<f64>> = subset.iter().map(|&i| {
                let mut r = rows[i].clone();
                r.push(rhs[i]);
                r
            }).collect();
            let mut ok = true;
            for col in 0..n {
                let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
                if a[piv][col].abs() < 1e-10 {
                    ok = false;
                    break;
                }
                a.swap(col, piv);
                for r in 0..n {
                    if r != col {
                        let f = a[r][col] / a[col][col];
                        for k in col..=n {
                            a[r][k] -= f * a[col][k];
                        }
                    }
                }
            }
            if ok {
                let x: Vec<f64> = (0..n).map(|i| a[i][n] / a[i][i]).collect();
                let feasible = rows.iter().zip(rhs).all(|(r, b)| r.iter().zip(&x).map(|(u, v)| u * v).sum::<f64>() <= b + 1e-9);
                if feasible {
                    best = best.max(c.iter().zip(&x).map(|(u, v)| u * v).sum());
                }
            }
            // next combination
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if subset[i] < m - n + i {
                    break;
                }
            }
            subset[i] += 1;
            for j in i + 1..n {
                subset[j] = subset[j - 1] + 1;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn lp_matches_vertex_enumeration(
            n in 1usize..=4,
            c in proptest::collection::vec(-1.0..1.0f64, 4),
            extra in proptest::collection::vec((proptest::collection::vec(-1.0..1.0f64, 4), 0.1..2.0f64), 0..5),
        ) {
            let c = &c[..n];
            let mut rows = Vec::new();
            let mut rhs = Vec::new();
            for i in 0..n {
                let mut up = vec![0.0; n];
                up[i] = 1.0;
                rows.push(up.clone());
                rhs.push(1.0);
                up[i] = -1.0;
                rows.push(up);
                rhs.push(1.0);
            }
            for (r, b) in &extra {
                rows.push(r[..n].to_vec());
                rhs.push(*b);
            }
            let mut p = ConicProgram::new(n);
            p.set_objective(c.to_vec()).unwrap();
            for (r, b) in rows.iter().zip(&rhs) {
                p.add(ineq(r.iter().cloned().enumerate().collect(), *b));
            }
            let s = solve(&p).unwrap();
            prop_assert_eq!(s.status, ConicStatus::Optimal);
            let oracle = vertex_enumeration(c, &rows, &rhs);
            prop_assert!((s.objective - oracle).abs() < 1e-6, "{} vs {}", s.objective, oracle);
        }

        #[test]
        fn soc_dual_is_complementary(
            c in proptest::collection::vec(-1.0..1.0f64, 3),
            center in proptest::collection::vec(-0.5..0.5f64, 3),
            radius in 0.1..2.0f64,
            cap in 0.0..2.0f64,
        ) {
            let mut p = ConicProgram::new(3);
            p.set_objective(c.clone()).unwrap();
            p.add_labeled(
                "ball",
                Constraint::SecondOrderCone {
                    rows: (0..3).map(|i| SparseRow::new(vec![(i, 1.0)])).collect(),
                    offsets: center.iter().map(|v| -v).collect(),
                    bound: SparseRow::default(),
                    bound_offset: radius,
                },
            ).unwrap();
            for i in 0..3 {
                p.add(ineq(vec![(i, 1.0)], cap));
            }
            let s = solve(&p).unwrap();
            prop_assume!(s.status == ConicStatus::Optimal);
            let dist = s.primal.iter().zip(&center).map(|(x, a)| (x - a) * (x - a)).sum::<f64>().sqrt();
            let lambda = s.dual("ball").unwrap();
            prop_assert!(lambda >= -1e-8);
            prop_assert!((lambda * (radius - dist)).abs() < 1e-6, "lambda {} slack {}", lambda, radius - dist);
        }
    }

    #[test]
    fn sparse_row_merges_duplicates() {
        let r = SparseRow::new(vec![(2, 1.0), (0, 3.0), (2, -1.0), (0, 1.0)]);
        assert_eq!(r.entries(), &[(0, 4.0)]);
    }
}
