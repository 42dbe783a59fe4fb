//! Turning relaxed row distributions into hard assignments.

use rand::Rng;

use super::problem::{build_lp, AssignmentProblem};
use super::BalancerError;
use crate::lp::{solve_milp_with, LpSolution, LpStatus, MilpOptions};
use crate::model::AssignmentMatrix;

/// Entries this close to each other count as a tie in deterministic rounding.
const TIE_TOL: f64 = 1e-9;

/// Sample each UE's band from its row, then repair.
pub fn round_probabilistic<R: Rng + ?Sized>(
    distributions: &AssignmentMatrix,
    problem: &AssignmentProblem,
    rng: &mut R,
) -> Result<AssignmentMatrix, BalancerError> {
    let nb = distributions.n_bands();
    let mut bands = Vec::with_capacity(distributions.n_ues());
    for u in 0..distributions.n_ues() {
        let row = distributions.row(u);
        let draw: f64 = rng.random();
        let mut b = sample_row(row, draw);
        if !problem.allowed(u, b) {
            // Resample among bands that meet the rate floor.
            let allowed: Vec<f64> = (0..nb)
                .map(|c| if problem.allowed(u, c) { row[c] } else { 0.0 })
                .collect();
            let mass: f64 = allowed.iter().sum();
            b = if mass > 0.0 {
                let scaled: Vec<f64> = allowed.iter().map(|p| p / mass).collect();
                sample_row(&scaled, rng.random())
            } else {
                fastest_allowed(problem, u).unwrap_or(b)
            };
        }
        bands.push(b);
    }
    repair(&mut bands, distributions, problem)?;
    Ok(AssignmentMatrix::from_bands(&bands, nb)?)
}

/// Round each row to its largest entry; exact ties are spread over the tied
/// bands by UE index. Then repair.
pub fn round_deterministic(
    distributions: &AssignmentMatrix,
    problem: &AssignmentProblem,
) -> Result<AssignmentMatrix, BalancerError> {
    let nb = distributions.n_bands();
    let mut bands = Vec::with_capacity(distributions.n_ues());
    for u in 0..distributions.n_ues() {
        let row = distributions.row(u);
        let candidates: Vec<usize> = (0..nb).filter(|&b| problem.allowed(u, b)).collect();
        let b = if candidates.is_empty() {
            nearest(row, u, &(0..nb).collect::<Vec<_>>())
        } else {
            nearest(row, u, &candidates)
        };
        bands.push(b);
    }
    repair(&mut bands, distributions, problem)?;
    Ok(AssignmentMatrix::from_bands(&bands, nb)?)
}

/// Solve the program with binary assignment variables.
pub fn round_milp(
    problem: &AssignmentProblem,
    opts: MilpOptions,
) -> Result<(AssignmentMatrix, LpSolution), BalancerError> {
    let lp = build_lp(problem);
    let sol = solve_milp_with(&lp, &problem.integer_vars(), opts)?;
    let has_values = !sol.values.is_empty();
    if !(sol.status == LpStatus::Optimal || (sol.status == LpStatus::NodeLimit && has_values)) {
        return Err(BalancerError::NoIntegralSolution { status: sol.status });
    }
    let nb = problem.n_bands();
    let bands: Vec<usize> = (0..problem.n_ues())
        .map(|u| {
            let row: Vec<f64> = (0..nb).map(|b| sol.values[problem.x_var(u, b)]).collect();
            crate::model::argmax(&row)
        })
        .collect();
    Ok((AssignmentMatrix::from_bands(&bands, nb)?, sol))
}

fn sample_row(row: &[f64], draw: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (b, &p) in row.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last_positive = b;
        acc += p;
        if draw < acc {
            return b;
        }
    }
    // Round-off left the cumulative sum just below one.
    last_positive
}

fn nearest(row: &[f64], ue: usize, candidates: &[usize]) -> usize {
    let best = candidates
        .iter()
        .map(|&b| row[b])
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&b| row[b] >= best - TIE_TOL)
        .collect();
    tied[ue % tied.len()]
}

fn fastest_allowed(problem: &AssignmentProblem, ue: usize) -> Option<usize> {
    (0..problem.n_bands())
        .filter(|&b| problem.allowed(ue, b))
        .max_by(|&a, &b| {
            problem
                .rates
                .get(ue, a)
                .total_cmp(&problem.rates.get(ue, b))
                .then(b.cmp(&a))
        })
}

/// Move UEs off over-cap bands until every cap holds.
///
/// From the lowest-index over-cap band, the UE with the least probability
/// mass on it (lowest index on ties) moves to its most probable alternative
/// that has room and meets the rate floor.
pub fn repair(
    bands: &mut [usize],
    distributions: &AssignmentMatrix,
    problem: &AssignmentProblem,
) -> Result<(), BalancerError> {
    let nb = problem.n_bands();
    let mut counts = vec![0usize; nb];
    for &b in bands.iter() {
        counts[b] += 1;
    }
    while let Some(over) = (0..nb).find(|&b| counts[b] > problem.caps[b]) {
        let mut on_band: Vec<usize> = (0..bands.len()).filter(|&u| bands[u] == over).collect();
        on_band.sort_by(|&a, &b| {
            distributions
                .get(a, over)
                .total_cmp(&distributions.get(b, over))
                .then(a.cmp(&b))
        });
        let mv = on_band.iter().find_map(|&u| {
            (0..nb)
                .filter(|&c| c != over && counts[c] < problem.caps[c] && problem.allowed(u, c))
                .max_by(|&a, &b| {
                    distributions
                        .get(u, a)
                        .total_cmp(&distributions.get(u, b))
                        .then(b.cmp(&a))
                })
                .map(|target| (u, target))
        });
        let Some((u, target)) = mv else {
            return Err(BalancerError::RepairFailed {
                bands: (0..nb).filter(|&b| counts[b] > problem.caps[b]).collect(),
            });
        };
        bands[u] = target;
        counts[over] -= 1;
        counts[target] += 1;
    }
    Ok(())
}
