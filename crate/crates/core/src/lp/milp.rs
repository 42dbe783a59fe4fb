//! Best-first branch and bound for programs with binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::{
    solve_lp_with_bounds, LinearProgram, LpError, LpSolution, LpStatus, DEFAULT_NODE_LIMIT,
    INTEGRALITY_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilpOptions {
    pub node_limit: usize,
    pub integrality_tol: f64,
    /// A node is discarded when its bound is within this much of the incumbent.
    pub prune_tol: f64,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            node_limit: DEFAULT_NODE_LIMIT,
            integrality_tol: INTEGRALITY_TOL,
            prune_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    fixings: Vec<(usize, f64)>,
    branch_var: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: lowest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    prog: &'a LinearProgram,
    integer_vars: &'a [usize],
    opts: MilpOptions,
    iterations: usize,
    nodes: usize,
    incumbent: Option<(f64, Vec<f64>)>,
}

impl Search<'_> {
    fn bounds_with(&self, fixings: &[(usize, f64)]) -> Vec<(f64, f64)> {
        let mut bounds = self.prog.bounds.clone();
        for &(j, v) in fixings {
            bounds[j] = (v, v);
        }
        bounds
    }

    fn solve_node(&mut self, fixings: &[(usize, f64)]) -> LpSolution {
        let sol = solve_lp_with_bounds(self.prog, &self.bounds_with(fixings));
        self.iterations += sol.iterations;
        sol
    }

    /// Most fractional integer variable; lowest index on ties.
    fn branch_var(&self, values: &[f64]) -> Option<usize> {
        let mut best = None;
        let mut best_frac = self.opts.integrality_tol;
        for &j in self.integer_vars {
            let f = (values[j] - values[j].floor()).min(values[j].ceil() - values[j]);
            if f > best_frac {
                best_frac = f;
                best = Some(j);
            }
        }
        best
    }

    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((obj, _)) => obj - self.opts.prune_tol * obj.abs().max(1.0),
            None => f64::INFINITY,
        }
    }

    fn offer_incumbent(&mut self, obj: f64, values: Vec<f64>) {
        if self.incumbent.as_ref().is_none_or(|(best, _)| obj < *best) {
            self.incumbent = Some((obj, values));
        }
    }

    /// Round-and-fix dive from the root solution to seed an incumbent.
    fn dive(&mut self, root: &LpSolution) {
        let mut fixings = Vec::new();
        let mut current = root.values.clone();
        for _ in 0..self.integer_vars.len() {
            let Some(j) = self.branch_var(&current) else {
                let obj = self.prog.objective_value(&current);
                self.offer_incumbent(obj, current);
                return;
            };
            fixings.push((j, current[j].round()));
            let sol = self.solve_node(&fixings);
            if !sol.is_optimal() {
                return;
            }
            current = sol.values;
        }
    }
}

pub fn solve_milp(prog: &LinearProgram, integer_vars: &[usize]) -> Result<LpSolution, LpError> {
    solve_milp_with(prog, integer_vars, MilpOptions::default())
}

pub fn solve_milp_with(
    prog: &LinearProgram,
    integer_vars: &[usize],
    opts: MilpOptions,
) -> Result<LpSolution, LpError> {
    prog.validate()?;
    for &var in integer_vars {
        if var >= prog.num_vars() {
            return Err(LpError::VariableOutOfRange {
                row: usize::MAX,
                var,
                n: prog.num_vars(),
            });
        }
        let (lo, hi) = prog.bounds[var];
        if lo < 0.0 || hi > 1.0 {
            return Err(LpError::NonBinaryInteger { var });
        }
    }
    let started = Instant::now();
    let mut search = Search {
        prog,
        integer_vars,
        opts,
        iterations: 0,
        nodes: 0,
        incumbent: None,
    };

    let root = search.solve_node(&[]);
    search.nodes = 1;
    if !root.is_optimal() {
        let mut out = LpSolution::without_solution(root.status, search.iterations, started);
        out.nodes = 1;
        return Ok(out);
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    match search.branch_var(&root.values) {
        None => search.offer_incumbent(root.objective_value, root.values.clone()),
        Some(j) => {
            search.dive(&root);
            heap.push(Node {
                bound: root.objective_value,
                depth: 0,
                seq,
                fixings: Vec::new(),
                branch_var: j,
            });
        }
    }

    let mut hit_limit = false;
    while let Some(node) = heap.pop() {
        if node.bound >= search.cutoff() {
            // Every remaining node is at least as bad.
            break;
        }
        for value in [0.0, 1.0] {
            if search.nodes >= opts.node_limit {
                hit_limit = true;
                break;
            }
            let mut fixings = node.fixings.clone();
            fixings.push((node.branch_var, value));
            let sol = search.solve_node(&fixings);
            search.nodes += 1;
            if !sol.is_optimal() || sol.objective_value >= search.cutoff() {
                continue;
            }
            match search.branch_var(&sol.values) {
                None => search.offer_incumbent(sol.objective_value, sol.values),
                Some(j) => {
                    seq += 1;
                    heap.push(Node {
                        bound: sol.objective_value,
                        depth: node.depth + 1,
                        seq,
                        fixings,
                        branch_var: j,
                    });
                }
            }
        }
        if hit_limit {
            break;
        }
    }

    let status = if hit_limit {
        LpStatus::NodeLimit
    } else {
        LpStatus::Optimal
    };
    let Some((_, values)) = search.incumbent.take() else {
        let status = if hit_limit {
            LpStatus::NodeLimit
        } else {
            LpStatus::Infeasible
        };
        let mut out = LpSolution::without_solution(status, search.iterations, started);
        out.nodes = search.nodes;
        return Ok(out);
    };

    // Snap the integer part and re-optimize the continuous part so the
    // reported objective carries no branching round-off.
    let fixings: Vec<(usize, f64)> = integer_vars
        .iter()
        .map(|&j| (j, values[j].round()))
        .collect();
    let polished = search.solve_node(&fixings);
    let values = if polished.is_optimal() {
        polished.values
    } else {
        values
    };
    Ok(LpSolution {
        objective_value: prog.objective_value(&values),
        values,
        status,
        iterations: search.iterations,
        nodes: search.nodes,
        solve_time: started.elapsed(),
    })
}
