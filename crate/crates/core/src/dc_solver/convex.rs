//! Generic convex program with a linear objective, affine constraints, concave
//! logarithms of affine forms and reciprocals, solved by the Clarabel interior-point
//! method through an exponential/second-order cone reformulation.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

use super::pieces::Block;
use super::SolverError;

/// A logarithm `ln(offset + Σ a_i x_i)`, shared between constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogAtom {
    pub offset: f64,
    pub affine: Vec<(usize, f64)>,
}

impl LogAtom {
    pub fn argument(&self, x: &[f64]) -> f64 {
        self.offset + self.affine.iter().map(|&(i, a)| a * x[i]).sum::<f64>()
    }
}

/// `constant + Σ c_i x_i + Σ c_a ln(atom_a) + Σ c_v / x_v`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Expr {
    pub constant: f64,
    pub linear: Vec<(usize, f64)>,
    pub logs: Vec<(usize, f64)>,
    pub inverses: Vec<(usize, f64)>,
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Expr {
            constant: c,
            ..Expr::default()
        }
    }

    pub fn add_linear(&mut self, var: usize, coef: f64) {
        if coef != 0.0 {
            self.linear.push((var, coef));
        }
    }

    pub fn value(&self, x: &[f64], atoms: &[LogAtom]) -> f64 {
        self.constant
            + self.linear.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
            + self
                .logs
                .iter()
                .map(|&(a, c)| c * atoms[a].argument(x).ln())
                .sum::<f64>()
            + self.inverses.iter().map(|&(v, c)| c / x[v]).sum::<f64>()
    }

    pub fn is_affine(&self) -> bool {
        self.logs.is_empty() && self.inverses.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Ge,
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub tag: String,
    pub expr: Expr,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    /// Signed slack: non-negative iff satisfied (equalities give minus the absolute gap).
    pub fn slack(&self, x: &[f64], atoms: &[LogAtom]) -> f64 {
        let v = self.expr.value(x, atoms);
        match self.sense {
            Sense::Ge => v - self.rhs,
            Sense::Le => self.rhs - v,
            Sense::Eq => -(v - self.rhs).abs(),
        }
    }
}

/// Minimize `objective·x + objective_constant` subject to bounds and constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexSubproblem {
    pub block: Option<Block>,
    pub num_vars: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub constraints: Vec<Constraint>,
    pub atoms: Vec<LogAtom>,
    pub expansion_point: Vec<f64>,
}

impl ConvexSubproblem {
    pub fn new(num_vars: usize) -> Self {
        ConvexSubproblem {
            block: None,
            num_vars,
            lower: vec![f64::NEG_INFINITY; num_vars],
            upper: vec![f64::INFINITY; num_vars],
            objective: vec![0.0; num_vars],
            objective_constant: 0.0,
            constraints: Vec::new(),
            atoms: Vec::new(),
            expansion_point: vec![0.0; num_vars],
        }
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64, start: f64) -> usize {
        self.num_vars += 1;
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.push(cost);
        self.expansion_point.push(start);
        self.num_vars - 1
    }

    pub fn add_atom(&mut self, atom: LogAtom) -> usize {
        self.atoms.push(atom);
        self.atoms.len() - 1
    }

    pub fn push(&mut self, tag: impl Into<String>, expr: Expr, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint {
            tag: tag.into(),
            expr,
            sense,
            rhs,
        });
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant
            + self
                .objective
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// Largest bound or constraint violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.num_vars {
            worst = worst.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        for c in &self.constraints {
            worst = worst.max(-c.slack(x, &self.atoms));
        }
        worst
    }

    fn check_convex(&self) -> Result<(), SolverError> {
        for c in &self.constraints {
            let concave_ok = |sign: f64| {
                c.expr.logs.iter().all(|&(_, k)| sign * k >= 0.0)
                    && c.expr.inverses.iter().all(|&(_, k)| sign * k <= 0.0)
            };
            let ok = match c.sense {
                Sense::Ge => concave_ok(1.0),
                Sense::Le => concave_ok(-1.0),
                Sense::Eq => c.expr.is_affine(),
            };
            if !ok {
                return Err(SolverError::NotConvex(c.tag.clone()));
            }
        }
        for c in &self.constraints {
            for &(v, _) in &c.expr.inverses {
                if !(self.lower[v] >= 0.0) {
                    return Err(SolverError::NotConvex(format!(
                        "{}: reciprocal of a variable without a non-negative lower bound",
                        c.tag
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvexStatus {
    Solved,
    /// Solved to reduced accuracy.
    Inaccurate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: ConvexStatus,
    pub max_violation: f64,
    pub iterations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// Rows of `A x + s = b` for one cone.
struct Rows {
    entries: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
}

impl Rows {
    fn new() -> Self {
        Rows {
            entries: Vec::new(),
            b: Vec::new(),
        }
    }

    /// Appends the row `s = b − a·x`.
    fn push(&mut self, a: &[(usize, f64)], b: f64) {
        let r = self.b.len();
        self.entries
            .extend(a.iter().filter(|(_, v)| *v != 0.0).map(|&(c, v)| (r, c, v)));
        self.b.push(b);
    }
}

pub fn solve_convex(
    sub: &ConvexSubproblem,
    opts: &SolveOptions,
) -> Result<ConvexSolution, SolverError> {
    sub.check_convex()?;
    let n = sub.num_vars;
    let mut used_atoms: Vec<Option<usize>> = vec![None; sub.atoms.len()];
    let mut used_inv: Vec<Option<usize>> = vec![None; n];
    let mut total = n;
    for c in &sub.constraints {
        for &(a, _) in &c.expr.logs {
            if used_atoms[a].is_none() {
                used_atoms[a] = Some(total);
                total += 1;
            }
        }
        for &(v, _) in &c.expr.inverses {
            if used_inv[v].is_none() {
                used_inv[v] = Some(total);
                total += 1;
            }
        }
    }

    let mut zero = Rows::new();
    let mut nonneg = Rows::new();
    let mut exp = Rows::new();
    let mut soc = Rows::new();
    for i in 0..n {
        if sub.lower[i].is_finite() {
            nonneg.push(&[(i, -1.0)], -sub.lower[i]);
        }
        if sub.upper[i].is_finite() {
            nonneg.push(&[(i, 1.0)], sub.upper[i]);
        }
    }
    for c in &sub.constraints {
        let mut coefs: Vec<(usize, f64)> = c.expr.linear.clone();
        coefs.extend(
            c.expr
                .logs
                .iter()
                .map(|&(a, k)| (used_atoms[a].unwrap(), k)),
        );
        coefs.extend(
            c.expr
                .inverses
                .iter()
                .map(|&(v, k)| (used_inv[v].unwrap(), k)),
        );
        match c.sense {
            Sense::Ge => {
                let neg: Vec<_> = coefs.iter().map(|&(i, v)| (i, -v)).collect();
                nonneg.push(&neg, c.expr.constant - c.rhs);
            }
            Sense::Le => nonneg.push(&coefs, c.rhs - c.expr.constant),
            Sense::Eq => zero.push(&coefs, c.rhs - c.expr.constant),
        }
    }
    let mut exp_count = 0;
    for (a, slot) in used_atoms.iter().enumerate() {
        if let Some(e) = *slot {
            let atom = &sub.atoms[a];
            exp.push(&[(e, -1.0)], 0.0);
            exp.push(&[], 1.0);
            let neg: Vec<_> = atom.affine.iter().map(|&(i, v)| (i, -v)).collect();
            exp.push(&neg, atom.offset);
            exp_count += 1;
        }
    }
    let mut soc_count = 0;
    for (v, slot) in used_inv.iter().enumerate() {
        if let Some(t) = *slot {
            // ‖(t − x, 2)‖ ≤ t + x  ⇔  t·x ≥ 1.
            soc.push(&[(t, -1.0), (v, -1.0)], 0.0);
            soc.push(&[(t, -1.0), (v, 1.0)], 0.0);
            soc.push(&[], 2.0);
            soc_count += 1;
        }
    }

    let mut rows_i = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut offset = 0;
    let blocks: [(&Rows, SupportedConeT<f64>); 2] = [
        (&zero, SupportedConeT::ZeroConeT(zero.b.len())),
        (&nonneg, SupportedConeT::NonnegativeConeT(nonneg.b.len())),
    ];
    for (rows, cone) in blocks {
        if rows.b.is_empty() {
            continue;
        }
        for &(r, c, v) in &rows.entries {
            rows_i.push(offset + r);
            cols.push(c);
            vals.push(v);
        }
        b.extend_from_slice(&rows.b);
        offset += rows.b.len();
        cones.push(cone);
    }
    for (rows, count, cone) in [
        (&exp, exp_count, SupportedConeT::ExponentialConeT()),
        (&soc, soc_count, SupportedConeT::SecondOrderConeT(3)),
    ] {
        for &(r, c, v) in &rows.entries {
            rows_i.push(offset + r);
            cols.push(c);
            vals.push(v);
        }
        b.extend_from_slice(&rows.b);
        offset += rows.b.len();
        cones.extend(std::iter::repeat(cone).take(count));
    }
    if b.is_empty() {
        return Err(SolverError::Infeasible(
            "problem without constraints is unbounded".into(),
        ));
    }

    let a_mat = CscMatrix::new_from_triplets(b.len(), total, rows_i, cols, vals);
    let p_mat = CscMatrix::zeros((total, total));
    let mut q = sub.objective.clone();
    q.resize(total, 0.0);
    let settings = DefaultSettings {
        verbose: false,
        max_iter: opts.max_iter,
        tol_gap_abs: opts.tol,
        tol_gap_rel: opts.tol,
        tol_feas: opts.tol,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &b, &cones, settings)
        .map_err(|e| SolverError::Numerical(format!("clarabel setup: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved => ConvexStatus::Solved,
        SolverStatus::AlmostSolved => ConvexStatus::Inaccurate,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(SolverError::Infeasible(
                "primal infeasibility certificate".into(),
            ))
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            return Err(SolverError::Infeasible("objective unbounded below".into()))
        }
        SolverStatus::MaxIterations | SolverStatus::MaxTime => {
            return Err(SolverError::IterLimit(sol.iterations as usize))
        }
        other => return Err(SolverError::Numerical(format!("clarabel status {other:?}"))),
    };
    let x = sol.x[..n].to_vec();
    Ok(ConvexSolution {
        objective: sub.objective_value(&x),
        max_violation: sub.max_violation(&x),
        x,
        status,
        iterations: sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_lp_hits_vertex() {
        let mut sub = ConvexSubproblem::new(2);
        sub.lower = vec![-1.0, 2.0];
        sub.upper = vec![3.0, 5.0];
        sub.objective = vec![1.0, -2.0];
        let s = solve_convex(&sub, &SolveOptions::default()).unwrap();
        assert!((s.x[0] + 1.0).abs() < 1e-6 && (s.x[1] - 5.0).abs() < 1e-6);
        assert!((s.objective + 11.0).abs() < 1e-6);
    }

    #[test]
    fn log_constraint_matches_closed_form() {
        // min x s.t. ln(1 + 2x) >= 1  =>  x = (e − 1)/2.
        let mut sub = ConvexSubproblem::new(1);
        sub.lower[0] = 0.0;
        sub.objective[0] = 1.0;
        let a = sub.add_atom(LogAtom {
            offset: 1.0,
            affine: vec![(0, 2.0)],
        });
        sub.push(
            "log",
            Expr {
                logs: vec![(a, 1.0)],
                ..Expr::default()
            },
            Sense::Ge,
            1.0,
        );
        let s = solve_convex(&sub, &SolveOptions::default()).unwrap();
        assert!((s.x[0] - (1f64.exp() - 1.0) / 2.0).abs() < 1e-6);
    }

    #[test]
    fn reciprocal_constraint() {
        // min x + y s.t. y − 4/x >= 0  =>  x = y = 2.
        let mut sub = ConvexSubproblem::new(2);
        sub.lower = vec![0.0, 0.0];
        sub.objective = vec![1.0, 1.0];
        let e = Expr {
            linear: vec![(1, 1.0)],
            inverses: vec![(0, -4.0)],
            ..Expr::default()
        };
        sub.push("inv", e, Sense::Ge, 0.0);
        let s = solve_convex(&sub, &SolveOptions::default()).unwrap();
        // The optimum is flat, so x is only accurate to about the square root of the tolerance.
        assert!((s.objective - 4.0).abs() < 1e-6);
        assert!(
            (s.x[0] - 2.0).abs() < 1e-3 && (s.x[1] - 2.0).abs() < 1e-3,
            "{s:?}"
        );
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut sub = ConvexSubproblem::new(1);
        sub.lower[0] = 1.0;
        sub.upper[0] = 0.0;
        sub.objective[0] = 1.0;
        assert!(matches!(
            solve_convex(&sub, &SolveOptions::default()),
            Err(SolverError::Infeasible(_))
        ));
    }

    #[test]
    fn wrong_curvature_rejected() {
        let mut sub = ConvexSubproblem::new(1);
        sub.lower[0] = 0.0;
        let a = sub.add_atom(LogAtom {
            offset: 1.0,
            affine: vec![(0, 1.0)],
        });
        sub.push(
            "bad",
            Expr {
                logs: vec![(a, 1.0)],
                ..Expr::default()
            },
            Sense::Le,
            1.0,
        );
        assert!(matches!(
            solve_convex(&sub, &SolveOptions::default()),
            Err(SolverError::NotConvex(_))
        ));
    }
}
