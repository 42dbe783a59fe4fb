//! Simplex results checked against exhaustive vertex enumeration.

use nalgebra::{DMatrix, DVector};
use pmlb_core::lp::{solve_lp, solve_milp, LinearProgram, LpStatus, FEASIBILITY_TOL};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum objective over all basic feasible solutions of a bounded program,
/// or `None` when no vertex is feasible.
fn vertex_enumeration_min(p: &LinearProgram) -> Option<f64> {
    let n = p.num_vars();
    // Candidate active rows: each as (dense row, rhs). Equalities are always active.
    let eq: Vec<(Vec<f64>, f64)> = p
        .eq_constraints
        .iter()
        .map(|c| (c.dense(n), c.rhs))
        .collect();
    let mut optional: Vec<(Vec<f64>, f64)> = p
        .ineq_constraints
        .iter()
        .map(|c| (c.dense(n), c.rhs))
        .collect();
    for (j, &(lo, hi)) in p.bounds.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        optional.push((e.clone(), lo));
        optional.push((e, hi));
    }
    let k = n - eq.len();
    let mut best: Option<f64> = None;
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        let rows: Vec<&(Vec<f64>, f64)> = eq
            .iter()
            .chain(combo.iter().map(|&i| &optional[i]))
            .collect();
        let a = DMatrix::from_fn(n, n, |r, c| rows[r].0[c]);
        let b = DVector::from_fn(n, |r, _| rows[r].1);
        if let Some(x) = a.lu().solve(&b) {
            let x: Vec<f64> = x.iter().copied().collect();
            if x.iter().all(|v| v.is_finite()) && p.max_violation(&x) <= 1e-9 {
                let obj = p.objective_value(&x);
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        // Next k-combination of optional rows.
        let m = optional.len();
        let mut i = k;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if combo[i] != i + m - k {
                break;
            }
        }
        combo[i] += 1;
        for j in i + 1..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

fn random_program(rng: &mut ChaCha8Rng, n: usize, n_le: usize, n_eq: usize) -> LinearProgram {
    let objective = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let mut p = LinearProgram::with_objective(objective);
    for j in 0..n {
        let lo = if rng.random_bool(0.5) {
            0.0
        } else {
            rng.random_range(-2.0..0.0)
        };
        p.set_bounds(j, lo, lo + rng.random_range(0.5..4.0));
    }
    for _ in 0..n_le {
        let row: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.7) {
                    rng.random_range(-3.0..3.0)
                } else {
                    0.0
                }
            })
            .collect();
        p.add_dense_le(&row, rng.random_range(-1.0..6.0)).unwrap();
    }
    for _ in 0..n_eq {
        let row: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        p.add_dense_eq(&row, rng.random_range(0.0..2.0)).unwrap();
    }
    p
}

#[test]
fn random_eight_variable_programs_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let mut optimal = 0;
    let mut infeasible = 0;
    for case in 0..60 {
        let n_eq = case % 3;
        let p = random_program(&mut rng, 8, 4, n_eq);
        let oracle = vertex_enumeration_min(&p);
        let s = solve_lp(&p).unwrap();
        match oracle {
            Some(best) => {
                assert_eq!(s.status, LpStatus::Optimal, "case {case}");
                assert!(
                    (s.objective_value - best).abs() <= 1e-6,
                    "case {case}: simplex {} vs oracle {best}",
                    s.objective_value
                );
                assert!(p.max_violation(&s.values) <= FEASIBILITY_TOL);
                optimal += 1;
            }
            None => {
                assert_eq!(s.status, LpStatus::Infeasible, "case {case}");
                infeasible += 1;
            }
        }
    }
    // The generator must exercise the optimal path substantially.
    assert!(
        optimal >= 30,
        "only {optimal} optimal cases ({infeasible} infeasible)"
    );
}

fn program_strategy() -> impl Strategy<Value = LinearProgram> {
    (any::<u64>(), 2usize..7, 1usize..6, 0usize..2).prop_map(|(seed, n, n_le, n_eq)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_program(&mut rng, n, n_le, n_eq.min(n - 1))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_solutions_are_feasible_and_consistent(p in program_strategy()) {
        let s = solve_lp(&p).unwrap();
        if s.status == LpStatus::Optimal {
            prop_assert!(p.max_violation(&s.values) <= FEASIBILITY_TOL);
            prop_assert!((p.objective_value(&s.values) - s.objective_value).abs() <= 1e-7);
            let again = solve_lp(&p).unwrap();
            prop_assert_eq!(again.objective_value, s.objective_value);
        } else {
            prop_assert_eq!(s.status, LpStatus::Infeasible);
        }
    }

    #[test]
    fn relaxation_bounds_the_binary_program(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = random_program(&mut rng, 6, 3, 0);
        for j in 0..6 {
            p.set_bounds(j, 0.0, 1.0);
        }
        let lp = solve_lp(&p).unwrap();
        let milp = solve_milp(&p, &(0..6).collect::<Vec<_>>()).unwrap();
        if milp.status == LpStatus::Optimal {
            prop_assert_eq!(lp.status, LpStatus::Optimal);
            prop_assert!(lp.objective_value <= milp.objective_value + 1e-6);
            for &v in &milp.values {
                prop_assert!((v - v.round()).abs() <= 1e-6);
            }
            prop_assert!(p.max_violation(&milp.values) <= FEASIBILITY_TOL);
            // Brute force over the 64 binary points.
            let mut best = f64::INFINITY;
            for mask in 0u32..64 {
                let x: Vec<f64> = (0..6).map(|j| ((mask >> j) & 1) as f64).collect();
                if p.max_violation(&x) <= 1e-9 {
                    best = best.min(p.objective_value(&x));
                }
            }
            prop_assert!((milp.objective_value - best).abs() <= 1e-9);
        }
    }
}
