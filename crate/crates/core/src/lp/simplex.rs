//! Bounded-variable revised primal simplex.
//!
//! Rows are equilibrated by their largest coefficient. Every `<=` row gets a
//! slack in `[0, inf)`; rows whose initial residual cannot be absorbed by a
//! slack get an artificial, driven to zero in phase one and then fixed at
//! zero for phase two. Nonbasic variables sit at a finite bound (or at zero
//! when free), so box constraints never become rows.

use std::time::Instant;

use super::factor::{BasisFactor, SparseCol};
use super::{LinearProgram, LpSolution, LpStatus, FEASIBILITY_TOL};

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const PHASE1_TOL: f64 = 1e-8;
const REFACTOR_EVERY: usize = 100;
/// Consecutive degenerate pivots before pricing switches to Bland's rule.
const STALL_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic(usize),
    Lower,
    Upper,
    /// Nonbasic free variable held at zero.
    Free,
    Fixed,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
    Numerical,
}

struct Simplex {
    m: usize,
    cols: Vec<SparseCol>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    b: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    artificial: Vec<bool>,
    /// Slack column of each row, if the row is an inequality.
    slack_of_row: Vec<Option<usize>>,
    factor: BasisFactor,
    iterations: usize,
    max_iterations: usize,
    phase_one: bool,
}

pub(super) fn solve(prog: &LinearProgram, bounds: &[(f64, f64)]) -> LpSolution {
    let started = Instant::now();
    let n = prog.num_vars();

    // Equal bounds: the variable is fixed and never enters.
    let mut sx = match Simplex::build(prog, bounds) {
        Some(sx) => sx,
        None => return LpSolution::without_solution(LpStatus::NumericalFailure, 0, started),
    };

    let needs_phase_one = sx
        .basis
        .iter()
        .any(|&j| sx.artificial[j] && sx.x[j] > PRIMAL_TOL);
    if needs_phase_one {
        let cost: Vec<f64> = sx
            .artificial
            .iter()
            .map(|&a| if a { 1.0 } else { 0.0 })
            .collect();
        match sx.run(&cost) {
            Outcome::Optimal => {}
            Outcome::Unbounded | Outcome::Numerical => {
                return LpSolution::without_solution(
                    LpStatus::NumericalFailure,
                    sx.iterations,
                    started,
                )
            }
            Outcome::IterationLimit => {
                return LpSolution::without_solution(
                    LpStatus::IterationLimit,
                    sx.iterations,
                    started,
                )
            }
        }
        let infeasibility: f64 = (0..sx.cols.len())
            .filter(|&j| sx.artificial[j])
            .map(|j| sx.x[j].max(0.0))
            .sum();
        if infeasibility > PHASE1_TOL {
            return LpSolution::without_solution(LpStatus::Infeasible, sx.iterations, started);
        }
    }
    sx.phase_one = false;
    sx.fix_artificials();

    let cmax = prog.objective.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let scale = if cmax > 0.0 { 1.0 / cmax } else { 1.0 };
    let mut cost = vec![0.0; sx.cols.len()];
    for (j, &c) in prog.objective.iter().enumerate() {
        cost[j] = c * scale;
    }
    match sx.run(&cost) {
        Outcome::Optimal => {}
        Outcome::Unbounded => {
            return LpSolution::without_solution(LpStatus::Unbounded, sx.iterations, started)
        }
        Outcome::IterationLimit => {
            return LpSolution::without_solution(LpStatus::IterationLimit, sx.iterations, started)
        }
        Outcome::Numerical => {
            return LpSolution::without_solution(LpStatus::NumericalFailure, sx.iterations, started)
        }
    }
    if sx.refactor().is_err() {
        return LpSolution::without_solution(LpStatus::NumericalFailure, sx.iterations, started);
    }

    let values: Vec<f64> = (0..n)
        .map(|j| {
            let (lo, hi) = bounds[j];
            sx.x[j].clamp(lo, hi)
        })
        .collect();
    let status = if prog.max_violation(&values) <= FEASIBILITY_TOL {
        LpStatus::Optimal
    } else {
        log::warn!(
            "simplex finished with residual {:.3e} above tolerance",
            prog.max_violation(&values)
        );
        LpStatus::NumericalFailure
    };
    LpSolution {
        objective_value: prog.objective_value(&values),
        values,
        status,
        iterations: sx.iterations,
        nodes: 0,
        solve_time: started.elapsed(),
    }
}

impl Simplex {
    fn build(prog: &LinearProgram, bounds: &[(f64, f64)]) -> Option<Self> {
        let n = prog.num_vars();
        let rows: Vec<_> = prog
            .eq_constraints
            .iter()
            .chain(&prog.ineq_constraints)
            .collect();
        let m = rows.len();
        let n_eq = prog.eq_constraints.len();

        let mut cols: Vec<SparseCol> = vec![Vec::new(); n];
        let mut b = vec![0.0; m];
        for (i, row) in rows.iter().enumerate() {
            let mut merged: Vec<(usize, f64)> = row.terms.clone();
            merged.sort_by_key(|&(j, _)| j);
            merged.dedup_by(|next, prev| {
                if next.0 == prev.0 {
                    prev.1 += next.1;
                    true
                } else {
                    false
                }
            });
            let amax = merged.iter().fold(0.0f64, |m, &(_, a)| m.max(a.abs()));
            let s = if amax > 0.0 { 1.0 / amax } else { 1.0 };
            for (j, a) in merged {
                if a != 0.0 {
                    cols[j].push((i, a * s));
                }
            }
            b[i] = row.rhs * s;
        }

        let mut lo: Vec<f64> = bounds.iter().map(|&(l, _)| l).collect();
        let mut hi: Vec<f64> = bounds.iter().map(|&(_, h)| h).collect();
        let mut x = vec![0.0; n];
        let mut state = vec![State::Lower; n];
        for j in 0..n {
            let (l, h) = (lo[j], hi[j]);
            if l == h {
                x[j] = l;
                state[j] = State::Fixed;
            } else if l.is_finite() {
                x[j] = l;
            } else if h.is_finite() {
                x[j] = h;
                state[j] = State::Upper;
            } else {
                state[j] = State::Free;
            }
        }
        let mut artificial = vec![false; n];

        let mut residual = b.clone();
        for (j, col) in cols.iter().enumerate() {
            if x[j] != 0.0 {
                for &(i, a) in col {
                    residual[i] -= a * x[j];
                }
            }
        }

        let mut slack_of_row = vec![None; m];
        for (i, slot) in slack_of_row.iter_mut().enumerate().skip(n_eq) {
            *slot = Some(cols.len());
            cols.push(vec![(i, 1.0)]);
            lo.push(0.0);
            hi.push(f64::INFINITY);
            x.push(0.0);
            state.push(State::Lower);
            artificial.push(false);
        }

        let mut basis = vec![usize::MAX; m];
        for i in 0..m {
            let r = residual[i];
            if let Some(s) = slack_of_row[i] {
                if r >= 0.0 {
                    x[s] = r;
                    state[s] = State::Basic(i);
                    basis[i] = s;
                    continue;
                }
            }
            let sign = if r < 0.0 { -1.0 } else { 1.0 };
            let j = cols.len();
            cols.push(vec![(i, sign)]);
            lo.push(0.0);
            hi.push(f64::INFINITY);
            x.push(r.abs());
            state.push(State::Basic(i));
            artificial.push(true);
            basis[i] = j;
        }

        let basis_cols = basis.iter().map(|&j| cols[j].clone()).collect();
        let factor = BasisFactor::new(m, basis_cols).ok()?;
        let max_iterations = 20_000 + 50 * (m + cols.len());
        Some(Self {
            m,
            cols,
            lo,
            hi,
            b,
            x,
            state,
            basis,
            artificial,
            slack_of_row,
            factor,
            iterations: 0,
            max_iterations,
            phase_one: true,
        })
    }

    fn fix_artificials(&mut self) {
        for j in 0..self.cols.len() {
            if self.artificial[j] {
                self.hi[j] = 0.0;
                if !matches!(self.state[j], State::Basic(_)) {
                    self.x[j] = 0.0;
                    self.state[j] = State::Fixed;
                }
            }
        }
    }

    fn dense_column(&self, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.m];
        for &(i, a) in &self.cols[j] {
            v[i] += a;
        }
        v
    }

    /// Rebuild the factorization from scratch and recompute basic values.
    /// A numerically singular basis is repaired by swapping logical columns in.
    fn refactor(&mut self) -> Result<(), ()> {
        for _attempt in 0..4 {
            let basis_cols = self.basis.iter().map(|&j| self.cols[j].clone()).collect();
            match BasisFactor::new(self.m, basis_cols) {
                Ok(f) => {
                    self.factor = f;
                    self.recompute_basic_values();
                    return Ok(());
                }
                Err(sing) => {
                    log::debug!(
                        "repairing singular basis ({} columns)",
                        sing.positions.len()
                    );
                    for (&pos, &row) in sing.positions.iter().zip(&sing.rows) {
                        let out = self.basis[pos];
                        self.make_nonbasic(out);
                        let logical = match self.slack_of_row[row] {
                            Some(s) if !matches!(self.state[s], State::Basic(_)) => s,
                            _ => self.push_artificial(row),
                        };
                        self.basis[pos] = logical;
                        self.state[logical] = State::Basic(pos);
                    }
                }
            }
        }
        Err(())
    }

    fn push_artificial(&mut self, row: usize) -> usize {
        let j = self.cols.len();
        self.cols.push(vec![(row, 1.0)]);
        self.lo.push(0.0);
        self.hi
            .push(if self.phase_one { f64::INFINITY } else { 0.0 });
        self.x.push(0.0);
        self.state.push(State::Lower);
        self.artificial.push(true);
        j
    }

    fn make_nonbasic(&mut self, j: usize) {
        let (l, h) = (self.lo[j], self.hi[j]);
        self.state[j] = if l == h {
            self.x[j] = l;
            State::Fixed
        } else if l.is_finite()
            && (!h.is_finite() || (self.x[j] - l).abs() <= (h - self.x[j]).abs())
        {
            self.x[j] = l;
            State::Lower
        } else if h.is_finite() {
            self.x[j] = h;
            State::Upper
        } else {
            self.x[j] = 0.0;
            State::Free
        };
    }

    fn recompute_basic_values(&mut self) {
        let mut rhs = self.b.clone();
        for (j, col) in self.cols.iter().enumerate() {
            if !matches!(self.state[j], State::Basic(_)) && self.x[j] != 0.0 {
                for &(i, a) in col {
                    rhs[i] -= a * self.x[j];
                }
            }
        }
        let xb = self.factor.ftran(&rhs);
        for (pos, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[pos];
        }
    }

    fn run(&mut self, cost: &[f64]) -> Outcome {
        let mut cost = cost.to_vec();
        let mut stall = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Outcome::IterationLimit;
            }
            if self.factor.num_updates() >= REFACTOR_EVERY && self.refactor().is_err() {
                return Outcome::Numerical;
            }
            // Columns added by basis repair carry phase-one cost only.
            if cost.len() < self.cols.len() {
                let phase_one = self.phase_one;
                cost.extend((cost.len()..self.cols.len()).map(|j| {
                    if phase_one && self.artificial[j] {
                        1.0
                    } else {
                        0.0
                    }
                }));
            }

            let cb: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
            let y = self.factor.btran(&cb);
            let bland = stall >= STALL_LIMIT;
            let Some((q, dir)) = self.price(&cost, &y, bland) else {
                return Outcome::Optimal;
            };

            let alpha = self.factor.ftran(&self.dense_column(q));
            let step = self.ratio_test(q, dir, &alpha, bland);
            self.iterations += 1;
            match step {
                Step::Unbounded => return Outcome::Unbounded,
                Step::Flip(theta) => {
                    self.apply_move(q, dir, theta, &alpha);
                    self.state[q] = if dir > 0.0 {
                        State::Upper
                    } else {
                        State::Lower
                    };
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                    stall = if theta > 1e-12 { 0 } else { stall + 1 };
                }
                Step::Pivot {
                    pos,
                    theta,
                    to_upper,
                } => {
                    self.apply_move(q, dir, theta, &alpha);
                    let out = self.basis[pos];
                    if self.lo[out] == self.hi[out] {
                        self.x[out] = self.lo[out];
                        self.state[out] = State::Fixed;
                    } else if to_upper {
                        self.x[out] = self.hi[out];
                        self.state[out] = State::Upper;
                    } else {
                        self.x[out] = self.lo[out];
                        self.state[out] = State::Lower;
                    }
                    self.basis[pos] = q;
                    self.state[q] = State::Basic(pos);
                    self.factor.update(pos, &alpha);
                    stall = if theta > 1e-12 { 0 } else { stall + 1 };
                }
            }
        }
    }

    /// Entering column and direction (+1 increase, -1 decrease).
    fn price(&self, cost: &[f64], y: &[f64], bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for (j, col) in self.cols.iter().enumerate() {
            let st = self.state[j];
            if matches!(st, State::Basic(_) | State::Fixed) {
                continue;
            }
            let d = cost[j] - col.iter().map(|&(i, a)| a * y[i]).sum::<f64>();
            let dir = match st {
                State::Lower if d < -DUAL_TOL => 1.0,
                State::Upper if d > DUAL_TOL => -1.0,
                State::Free if d.abs() > DUAL_TOL => -d.signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if d.abs() > best_score {
                best_score = d.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64], bland: bool) -> Step {
        // Harris two-pass: find the relaxed step bound, then the largest pivot
        // among rows whose exact ratio fits under it.
        let mut theta_max = f64::INFINITY;
        for (pos, &a) in alpha.iter().enumerate() {
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let j = self.basis[pos];
            let delta = dir * a;
            let relaxed = if delta > 0.0 {
                if !self.lo[j].is_finite() {
                    continue;
                }
                (self.x[j] - self.lo[j] + PRIMAL_TOL) / delta
            } else {
                if !self.hi[j].is_finite() {
                    continue;
                }
                (self.hi[j] - self.x[j] + PRIMAL_TOL) / -delta
            };
            theta_max = theta_max.min(relaxed);
        }

        let range = self.hi[q] - self.lo[q];
        let mut chosen: Option<(usize, f64, bool)> = None;
        let mut chosen_key = (f64::NEG_INFINITY, usize::MAX);
        if theta_max.is_finite() {
            for (pos, &a) in alpha.iter().enumerate() {
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.basis[pos];
                let delta = dir * a;
                let (exact, to_upper) = if delta > 0.0 {
                    if !self.lo[j].is_finite() {
                        continue;
                    }
                    ((self.x[j] - self.lo[j]) / delta, false)
                } else {
                    if !self.hi[j].is_finite() {
                        continue;
                    }
                    ((self.hi[j] - self.x[j]) / -delta, true)
                };
                if exact > theta_max {
                    continue;
                }
                // Bland: smallest column index among the minimum ratios.
                let key = if bland {
                    (-exact.max(0.0), usize::MAX - j)
                } else {
                    (a.abs(), usize::MAX - j)
                };
                if key > chosen_key {
                    chosen_key = key;
                    chosen = Some((pos, exact.max(0.0), to_upper));
                }
            }
        }

        match chosen {
            Some((_, theta, _)) if range.is_finite() && range <= theta => Step::Flip(range),
            Some((pos, theta, to_upper)) => Step::Pivot {
                pos,
                theta,
                to_upper,
            },
            None if range.is_finite() => Step::Flip(range),
            None => Step::Unbounded,
        }
    }

    fn apply_move(&mut self, q: usize, dir: f64, theta: f64, alpha: &[f64]) {
        if theta == 0.0 {
            return;
        }
        self.x[q] += dir * theta;
        for (pos, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                let j = self.basis[pos];
                self.x[j] -= dir * theta * a;
            }
        }
    }
}

enum Step {
    Unbounded,
    Flip(f64),
    Pivot {
        pos: usize,
        theta: f64,
        to_upper: bool,
    },
}
