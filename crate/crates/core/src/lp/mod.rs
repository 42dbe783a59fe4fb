//! Linear and mixed-integer linear programming.
//!
//! [`solve_lp`] is a bounded-variable revised primal simplex (two phases,
//! Dantzig pricing with a fallback to Bland's rule on degenerate stalls).
//! [`solve_milp`] is best-first branch and bound over binary variables with
//! LP bounding. Programs are stored with sparse rows; dense rows are accepted
//! by the builder methods.

mod factor;
mod milp;
mod simplex;

use std::time::{Duration, Instant};

use thiserror::Error;

pub use milp::{solve_milp, solve_milp_with, MilpOptions};

/// Feasibility tolerance guaranteed on returned optimal solutions.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Distance from {0, 1} accepted as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Default branch-and-bound node budget.
pub const DEFAULT_NODE_LIMIT: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("row {row} references variable {var} but the program has {n} variables")]
    VariableOutOfRange { row: usize, var: usize, n: usize },
    #[error("variable {var} has lower bound {lo} above upper bound {hi}")]
    InvertedBounds { var: usize, lo: f64, hi: f64 },
    #[error("non-finite coefficient in {what}")]
    NonFinite { what: String },
    #[error("dense row has length {found}, expected {expected}")]
    RowLength { expected: usize, found: usize },
    #[error("integer variable {var} must have bounds within [0, 1]")]
    NonBinaryInteger { var: usize },
}

/// `terms . x (= or <=) rhs`, with `terms` as `(variable, coefficient)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { terms, rhs }
    }

    pub fn from_dense(row: &[f64], rhs: f64) -> Self {
        Self {
            terms: row
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| (j, v))
                .collect(),
            rhs,
        }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut row = vec![0.0; n];
        for &(j, a) in &self.terms {
            row[j] += a;
        }
        row
    }
}

/// `min objective . x` subject to equality rows, `<=` rows and variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq_constraints: Vec<Constraint>,
    pub ineq_constraints: Vec<Constraint>,
    /// Per-variable `(lo, hi)`; infinite values are allowed.
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// `n` variables, zero objective, bounds `[0, +inf)`.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            eq_constraints: Vec::new(),
            ineq_constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn with_objective(objective: Vec<f64>) -> Self {
        let mut p = Self::new(objective.len());
        p.objective = objective;
        p
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.eq_constraints.len() + self.ineq_constraints.len()
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> &mut Self {
        self.eq_constraints.push(Constraint::new(terms, rhs));
        self
    }

    /// `terms . x <= rhs`.
    pub fn add_le(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> &mut Self {
        self.ineq_constraints.push(Constraint::new(terms, rhs));
        self
    }

    /// `terms . x >= rhs`, stored negated as a `<=` row.
    pub fn add_ge(&mut self, terms: Vec<(usize, f64)>, rhs: f64) -> &mut Self {
        let negated = terms.into_iter().map(|(j, a)| (j, -a)).collect();
        self.ineq_constraints.push(Constraint::new(negated, -rhs));
        self
    }

    pub fn add_dense_eq(&mut self, row: &[f64], rhs: f64) -> Result<&mut Self, LpError> {
        self.check_dense(row)?;
        self.eq_constraints.push(Constraint::from_dense(row, rhs));
        Ok(self)
    }

    pub fn add_dense_le(&mut self, row: &[f64], rhs: f64) -> Result<&mut Self, LpError> {
        self.check_dense(row)?;
        self.ineq_constraints.push(Constraint::from_dense(row, rhs));
        Ok(self)
    }

    fn check_dense(&self, row: &[f64]) -> Result<(), LpError> {
        if row.len() != self.num_vars() {
            return Err(LpError::RowLength {
                expected: self.num_vars(),
                found: row.len(),
            });
        }
        Ok(())
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) -> &mut Self {
        self.bounds[var] = (lo, hi);
        self
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(LpError::RowLength {
                expected: n,
                found: self.bounds.len(),
            });
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite {
                what: "objective".into(),
            });
        }
        for (var, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan()
                || hi.is_nan()
                || lo > hi
                || lo == f64::INFINITY
                || hi == f64::NEG_INFINITY
            {
                return Err(LpError::InvertedBounds { var, lo, hi });
            }
        }
        for (row, c) in self
            .eq_constraints
            .iter()
            .chain(&self.ineq_constraints)
            .enumerate()
        {
            if !c.rhs.is_finite() {
                return Err(LpError::NonFinite {
                    what: format!("rhs of row {row}"),
                });
            }
            for &(var, a) in &c.terms {
                if var >= n {
                    return Err(LpError::VariableOutOfRange { row, var, n });
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite {
                        what: format!("row {row}"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let eq = self
            .eq_constraints
            .iter()
            .map(|c| (c.activity(x) - c.rhs).abs());
        let le = self
            .ineq_constraints
            .iter()
            .map(|c| (c.activity(x) - c.rhs).max(0.0));
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0));
        eq.chain(le).chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Simplex pivot budget exhausted.
    IterationLimit,
    /// Branch and bound stopped at its node budget; `values` holds the best
    /// integral solution found, if any.
    NodeLimit,
    /// Basis repair failed after a numerically singular factorization.
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective_value: f64,
    pub status: LpStatus,
    /// Simplex pivots (summed over all nodes for MILP).
    pub iterations: usize,
    /// Branch-and-bound nodes explored; zero for a plain LP solve.
    pub nodes: usize,
    pub solve_time: Duration,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub(crate) fn without_solution(status: LpStatus, iterations: usize, started: Instant) -> Self {
        Self {
            values: Vec::new(),
            objective_value: f64::NAN,
            status,
            iterations,
            nodes: 0,
            solve_time: started.elapsed(),
        }
    }
}

/// Solve a linear program. Infeasibility and unboundedness come back as a
/// status, never as a panic or `Err`; `Err` is reserved for malformed input.
pub fn solve_lp(prog: &LinearProgram) -> Result<LpSolution, LpError> {
    prog.validate()?;
    Ok(simplex::solve(prog, &prog.bounds))
}

/// Like [`solve_lp`] but with replacement bounds; used by branch and bound.
pub(crate) fn solve_lp_with_bounds(prog: &LinearProgram, bounds: &[(f64, f64)]) -> LpSolution {
    simplex::solve(prog, bounds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Lp,
    Milp,
}

/// Objective and wall-clock time of a single solve.
pub fn solve_stats(
    prog: &LinearProgram,
    mode: SolveMode,
    integer_vars: &[usize],
) -> Result<(LpSolution, Duration), LpError> {
    let started = Instant::now();
    let sol = match mode {
        SolveMode::Lp => solve_lp(prog)?,
        SolveMode::Milp => solve_milp(prog, integer_vars)?,
    };
    Ok((sol, started.elapsed()))
}
