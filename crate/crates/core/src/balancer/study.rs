//! Objective-space studies on a single balancing instant: the weight sweep
//! and the comparison of rounding strategies against the exact program.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::problem::{build_lp, AssignmentProblem};
use super::rounding::{round_deterministic, round_probabilistic};
use super::BalancerError;
use crate::lp::{solve_lp, solve_milp_with, LpStatus, MilpOptions};
use crate::model::{argmax, objective_f1, objective_f2, AssignmentMatrix};

/// One point of the weight sweep. `f1` and `f2` are the raw objectives of
/// the relaxed assignment; the `_norm` fields divide by the normalizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub w: f64,
    pub f1: f64,
    pub f2: f64,
    pub f1_norm: f64,
    pub f2_norm: f64,
    pub objective: f64,
}

/// Solves the relaxation of `problem` at weight `w`.
pub fn pareto_point(problem: &AssignmentProblem, w: f64) -> Result<ParetoPoint, BalancerError> {
    if !(0.0..=1.0).contains(&w) {
        return Err(BalancerError::Config(format!("weight {w} outside [0, 1]")));
    }
    let p = AssignmentProblem {
        w,
        ..problem.clone()
    };
    let sol = solve_lp(&build_lp(&p))?;
    if !sol.is_optimal() {
        return Err(BalancerError::NoIntegralSolution { status: sol.status });
    }
    let x = p.distributions(&sol)?;
    let f1 = objective_f1(&x, &p.loads)?;
    let f2 = objective_f2(&x, &p.previous)?;
    Ok(ParetoPoint {
        w,
        f1,
        f2,
        f1_norm: f1 / p.t_max(),
        f2_norm: f2 / p.y_max(),
        objective: sol.objective_value,
    })
}

/// Outcome of the four solution methods on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingRow {
    pub n_ues: usize,
    pub seed: u64,
    pub lp_time_ms: f64,
    pub milp_time_ms: f64,
    /// `optimal`, `node_limit` or `no_solution`.
    pub milp_status: String,
    pub milp_nodes: usize,
    pub lp_obj: f64,
    /// NaN when branch and bound found no integral point.
    pub milp_obj: f64,
    pub dlp_obj: f64,
    pub plp_obj_mean: f64,
}

/// Solves the relaxation and the exact program, then rounds the relaxation
/// deterministically and `samples` times at random. Hitting the node limit
/// is recorded in the row rather than treated as an error.
pub fn rounding_study(
    problem: &AssignmentProblem,
    seed: u64,
    samples: usize,
    opts: MilpOptions,
) -> Result<RoundingRow, BalancerError> {
    let lp = build_lp(problem);
    let started = Instant::now();
    let relaxed = solve_lp(&lp)?;
    let lp_time = started.elapsed();
    if !relaxed.is_optimal() {
        return Err(BalancerError::NoIntegralSolution {
            status: relaxed.status,
        });
    }
    let started = Instant::now();
    let exact = solve_milp_with(&lp, &problem.integer_vars(), opts)?;
    let milp_time = started.elapsed();
    let milp_obj = if exact.values.is_empty() {
        f64::NAN
    } else {
        let nb = problem.n_bands();
        let bands: Vec<usize> = (0..problem.n_ues())
            .map(|u| argmax(&exact.values[u * nb..(u + 1) * nb]))
            .collect();
        problem.scalarized(&AssignmentMatrix::from_bands(&bands, nb)?)?
    };
    let milp_status = match (exact.status, exact.values.is_empty()) {
        (LpStatus::Optimal, _) => "optimal",
        (LpStatus::NodeLimit, false) => "node_limit",
        _ => "no_solution",
    };

    let dist = problem.symmetrize(&problem.distributions(&relaxed)?)?;
    let dlp_obj = problem.scalarized(&round_deterministic(&dist, problem)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..samples.max(1) {
        total += problem.scalarized(&round_probabilistic(&dist, problem, &mut rng)?)?;
    }
    Ok(RoundingRow {
        n_ues: problem.n_ues(),
        seed,
        lp_time_ms: lp_time.as_secs_f64() * 1e3,
        milp_time_ms: milp_time.as_secs_f64() * 1e3,
        milp_status: milp_status.into(),
        milp_nodes: exact.nodes,
        lp_obj: relaxed.objective_value,
        milp_obj,
        dlp_obj,
        plp_obj_mean: total / samples.max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balancer::{random_instance, InstanceParams};

    #[test]
    fn weight_outside_unit_interval() {
        let p = random_instance(&InstanceParams::new(4, 3), 0);
        assert!(pareto_point(&p, 1.5).is_err());
    }

    #[test]
    fn study_orders_objectives() {
        let p = random_instance(&InstanceParams::new(12, 3), 2);
        let r = rounding_study(&p, 2, 20, MilpOptions::default()).unwrap();
        assert_eq!(r.milp_status, "optimal");
        assert!(r.lp_obj <= r.milp_obj + 1e-9);
        assert!(r.milp_obj <= r.dlp_obj + 1e-9 && r.milp_obj <= r.plp_obj_mean + 1e-9);
    }
}
