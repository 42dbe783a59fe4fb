//! The scalarized assignment problem and its epigraph LP form.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::BalancerError;
use crate::lp::{LinearProgram, LpSolution};
use crate::model::{objective_f1, objective_f2, AssignmentMatrix, LoadSample, RateMatrix};

/// How the max-load term is scaled into [0, 1] before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `T_max = sum_u max_b rho_{u,b}`: every UE stacked on its worst band.
    #[default]
    WorstCase,
    /// `T_max = f1(previous)`: the max load if nobody moves.
    Current,
}

/// One balancing instant over the UEs that take part in the optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentProblem {
    /// Expected per-UE loads; `incurred_loads` carries load already fixed
    /// on each band by the prefilter.
    pub loads: LoadSample,
    /// Estimated rates of the optimized UEs.
    pub rates: RateMatrix,
    /// Current hard assignment of the optimized UEs.
    pub previous: AssignmentMatrix,
    /// UEs each band may still admit.
    pub caps: Vec<usize>,
    pub r_min: f64,
    pub w: f64,
    pub normalization: Normalization,
}

impl AssignmentProblem {
    pub fn validate(&self) -> Result<(), BalancerError> {
        let (u, b) = (self.loads.n_ues(), self.loads.n_bands());
        let dims_ok = self.rates.n_ues() == u
            && self.rates.n_bands() == b
            && self.previous.n_ues() == u
            && self.previous.n_bands() == b
            && self.caps.len() == b;
        if !dims_ok {
            return Err(BalancerError::Config(format!(
                "problem dimensions disagree: loads {u}x{b}, rates {}x{}, previous {}x{}, {} caps",
                self.rates.n_ues(),
                self.rates.n_bands(),
                self.previous.n_ues(),
                self.previous.n_bands(),
                self.caps.len()
            )));
        }
        if !self.previous.is_hard() {
            return Err(BalancerError::Config(
                "previous assignment must be hard".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(BalancerError::Config(format!(
                "w = {} outside [0, 1]",
                self.w
            )));
        }
        if !(self.r_min >= 0.0) {
            return Err(BalancerError::Config(format!(
                "r_min = {} is negative",
                self.r_min
            )));
        }
        Ok(())
    }

    pub fn n_ues(&self) -> usize {
        self.loads.n_ues()
    }

    pub fn n_bands(&self) -> usize {
        self.loads.n_bands()
    }

    pub fn x_var(&self, ue: usize, band: usize) -> usize {
        ue * self.n_bands() + band
    }

    pub fn y_var(&self, ue: usize, band: usize) -> usize {
        self.n_ues() * self.n_bands() + ue * self.n_bands() + band
    }

    pub fn t_var(&self) -> usize {
        2 * self.n_ues() * self.n_bands()
    }

    pub fn y_total_var(&self) -> usize {
        self.t_var() + 1
    }

    pub fn num_vars(&self) -> usize {
        self.t_var() + 2
    }

    /// Assignment variables, the ones that must be binary in the MILP.
    pub fn integer_vars(&self) -> Vec<usize> {
        (0..self.n_ues() * self.n_bands()).collect()
    }

    /// Whether UE `ue` meets `r_min` on `band`.
    pub fn allowed(&self, ue: usize, band: usize) -> bool {
        self.rates.get(ue, band) >= self.r_min
    }

    pub fn t_max(&self) -> f64 {
        let t = match self.normalization {
            Normalization::WorstCase => (0..self.n_ues())
                .map(|u| {
                    (0..self.n_bands())
                        .map(|b| self.loads.load(u, b))
                        .fold(0.0, f64::max)
                })
                .sum(),
            Normalization::Current => objective_f1(&self.previous, &self.loads).unwrap_or(0.0),
        };
        if t > 0.0 {
            t
        } else {
            1.0
        }
    }

    pub fn y_max(&self) -> f64 {
        (2 * self.n_ues()).max(1) as f64
    }

    /// Normalized (f1, f2) of an assignment over the optimized UEs.
    pub fn objective_parts(
        &self,
        assignment: &AssignmentMatrix,
    ) -> Result<(f64, f64), BalancerError> {
        let f1 = objective_f1(assignment, &self.loads)?;
        let f2 = objective_f2(assignment, &self.previous)?;
        Ok((f1 / self.t_max(), f2 / self.y_max()))
    }

    /// `w f1/T_max + (1-w) f2/Y_max`; for a hard assignment this is the LP
    /// objective at `t = f1`, `y = f2`.
    pub fn scalarized(&self, assignment: &AssignmentMatrix) -> Result<f64, BalancerError> {
        let (f1, f2) = self.objective_parts(assignment)?;
        Ok(self.w * f1 + (1.0 - self.w) * f2)
    }

    /// Whether a hard assignment meets the rate floor and band caps.
    pub fn is_feasible(&self, bands: &[usize]) -> bool {
        let mut counts = vec![0usize; self.n_bands()];
        for (u, &b) in bands.iter().enumerate() {
            if !self.allowed(u, b) {
                return false;
            }
            counts[b] += 1;
        }
        counts.iter().zip(&self.caps).all(|(c, cap)| c <= cap)
    }

    /// The relaxed assignment in an LP solution, as row distributions.
    pub fn distributions(&self, sol: &LpSolution) -> Result<AssignmentMatrix, BalancerError> {
        let n = self.n_ues() * self.n_bands();
        Ok(AssignmentMatrix::stochastic_from_relaxed(
            self.n_ues(),
            self.n_bands(),
            sol.values[..n].to_vec(),
        )?)
    }

    /// Groups of UEs the program cannot tell apart: identical load, rate and
    /// previous rows. Groups are in order of first member.
    pub fn interchangeable_groups(&self) -> Vec<Vec<usize>> {
        let nb = self.n_bands();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for u in 0..self.n_ues() {
            let key: Vec<u64> = (0..nb)
                .flat_map(|b| {
                    [
                        self.loads.load(u, b),
                        self.rates.get(u, b),
                        self.previous.get(u, b),
                    ]
                })
                .map(f64::to_bits)
                .collect();
            match index.get(&key) {
                Some(&g) => groups[g].push(u),
                None => {
                    index.insert(key, groups.len());
                    groups.push(vec![u]);
                }
            }
        }
        groups
    }

    /// Average the rows of interchangeable UEs.
    ///
    /// Swapping two such UEs maps optimal solutions to optimal solutions, so
    /// the average is still optimal. A simplex vertex breaks these ties
    /// arbitrarily; the averaged point treats equal UEs equally.
    pub fn symmetrize(
        &self,
        distributions: &AssignmentMatrix,
    ) -> Result<AssignmentMatrix, BalancerError> {
        let nb = self.n_bands();
        let mut entries = distributions.entries().to_vec();
        for group in self.interchangeable_groups() {
            if group.len() < 2 {
                continue;
            }
            let mut mean = vec![0.0; nb];
            for &u in &group {
                for (m, v) in mean.iter_mut().zip(distributions.row(u)) {
                    *m += v / group.len() as f64;
                }
            }
            for &u in &group {
                entries[u * nb..(u + 1) * nb].copy_from_slice(&mean);
            }
        }
        Ok(AssignmentMatrix::stochastic_from_relaxed(
            self.n_ues(),
            nb,
            entries,
        )?)
    }
}

/// The epigraph LP: variables `x_{u,b}`, `y_{u,b}`, `t`, `y`, minimizing
/// `w t/T_max + (1-w) y/Y_max`.
///
/// Rows: one simplex equality per UE, the tie row `sum y_{u,b} = y`, one rate
/// floor per UE, one cap per band, one epigraph row per band, and two
/// absolute-value rows per `(u, b)`.
pub fn build_lp(problem: &AssignmentProblem) -> LinearProgram {
    let (nu, nb) = (problem.n_ues(), problem.n_bands());
    let mut objective = vec![0.0; problem.num_vars()];
    objective[problem.t_var()] = problem.w / problem.t_max();
    objective[problem.y_total_var()] = (1.0 - problem.w) / problem.y_max();
    let mut lp = LinearProgram::with_objective(objective);

    for u in 0..nu {
        for b in 0..nb {
            lp.set_bounds(problem.x_var(u, b), 0.0, 1.0);
            lp.set_bounds(problem.y_var(u, b), 0.0, 1.0);
        }
    }
    lp.set_bounds(problem.t_var(), 0.0, f64::INFINITY);
    lp.set_bounds(problem.y_total_var(), 0.0, problem.y_max());

    for u in 0..nu {
        lp.add_eq((0..nb).map(|b| (problem.x_var(u, b), 1.0)).collect(), 1.0);
    }
    let mut tie: Vec<(usize, f64)> = (0..nu)
        .flat_map(|u| (0..nb).map(move |b| (u, b)))
        .map(|(u, b)| (problem.y_var(u, b), 1.0))
        .collect();
    tie.push((problem.y_total_var(), -1.0));
    lp.add_eq(tie, 0.0);

    for u in 0..nu {
        // Scaled so the row coefficients are O(1).
        let scale = if problem.r_min > 0.0 {
            problem.r_min
        } else {
            problem.rates.row(u).iter().copied().fold(1.0, f64::max)
        };
        let terms = (0..nb)
            .map(|b| (problem.x_var(u, b), problem.rates.get(u, b) / scale))
            .collect();
        lp.add_ge(terms, problem.r_min / scale);
    }
    for b in 0..nb {
        lp.add_le(
            (0..nu).map(|u| (problem.x_var(u, b), 1.0)).collect(),
            problem.caps[b] as f64,
        );
    }
    for b in 0..nb {
        let mut terms: Vec<(usize, f64)> = (0..nu)
            .map(|u| (problem.x_var(u, b), problem.loads.load(u, b)))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        terms.push((problem.t_var(), -1.0));
        lp.add_le(terms, -problem.loads.incurred_loads[b]);
    }
    for u in 0..nu {
        for b in 0..nb {
            let prev = problem.previous.get(u, b);
            let (x, y) = (problem.x_var(u, b), problem.y_var(u, b));
            lp.add_le(vec![(x, 1.0), (y, -1.0)], prev);
            lp.add_le(vec![(x, -1.0), (y, -1.0)], -prev);
        }
    }
    lp
}
