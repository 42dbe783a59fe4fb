mod common;

use pmlb_core::balancer::{
    build_lp, pmlb_step, prefilter_infeasible, random_instance, round_deterministic, round_milp,
    round_probabilistic, AssignmentProblem, BalancerConfig, InstanceParams, LoadWindow, Rounding,
};
use pmlb_core::lp::{solve_lp, MilpOptions};
use pmlb_core::model::{objective_f1, objective_f2, AssignmentMatrix, Band, UeState};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance(n_ues: usize, n_bands: usize, w: f64, seed: u64) -> AssignmentProblem {
    let mut p = InstanceParams::new(n_ues, n_bands);
    p.w = w;
    random_instance(&p, seed)
}

/// UEs whose quality ranks bands like their rates do.
fn ues_for(p: &AssignmentProblem) -> Vec<UeState> {
    (0..p.n_ues())
        .map(|u| {
            let q = p
                .rates
                .row(u)
                .iter()
                .map(|r| 10.0 * (r / 1e6).log10())
                .collect();
            UeState::new(u, 50.0, 12_000.0, q, p.previous.band_of(u)).unwrap()
        })
        .collect()
}

fn bands_for(p: &AssignmentProblem) -> Vec<Band> {
    p.caps
        .iter()
        .enumerate()
        .map(|(b, &cap)| Band::new(b, 10e6, 50, cap.max(1)).unwrap())
        .collect()
}

fn window_of(p: &AssignmentProblem) -> LoadWindow {
    let mut w = LoadWindow::new(1);
    w.push(p.loads.clone()).unwrap();
    w
}

/// Actual (f1, f2) of the LP's relaxed assignment, independent of the slack
/// variables `t` and `y`, which are free when their weight is zero.
fn relaxed_parts(p: &AssignmentProblem) -> (f64, f64) {
    let sol = solve_lp(&build_lp(p)).unwrap();
    assert!(sol.is_optimal(), "{:?}", sol.status);
    let x = p.distributions(&sol).unwrap();
    (
        objective_f1(&x, &p.loads).unwrap(),
        objective_f2(&x, &p.previous).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn milp_matches_exhaustive_search(seed in 0u64..10_000, nu in 2usize..=6, w in 0.0..=1.0f64) {
        let p = instance(nu, 3, w, seed);
        let (milp, sol) = round_milp(&p, MilpOptions::default()).unwrap();
        let (best, _) = common::brute_force(&p).expect("generated starts are feasible");
        prop_assert!((sol.objective_value - best).abs() <= 1e-9, "milp {} oracle {}", sol.objective_value, best);
        prop_assert!((p.scalarized(&milp).unwrap() - best).abs() <= 1e-9);
        prop_assert!(p.is_feasible(&milp.bands()));
    }

    #[test]
    fn pmlb_output_is_feasible(
        seed in 0u64..10_000,
        nu in 4usize..40,
        r_min in prop::sample::select(vec![0.0, 1e6, 4e6, 12e6]),
        rounding in prop::sample::select(vec![Rounding::Probabilistic, Rounding::Deterministic]),
    ) {
        let p = instance(nu, 4, 0.7, seed);
        let ues = ues_for(&p);
        let bands = bands_for(&p);
        let cfg = BalancerConfig { r_min, rounding, lbi_threshold: 1.0, ..BalancerConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = pmlb_step(&window_of(&p), &p.previous, &ues, &p.rates, &bands, &cfg, &mut rng).unwrap();

        let out = &d.new_assignment;
        prop_assert!(out.is_hard());
        prop_assert_eq!(d.handover_count as f64, objective_f2(out, &p.previous).unwrap() / 2.0);
        if !d.triggered {
            prop_assert_eq!(out, &p.previous);
        }
        if d.fallback.is_some() {
            prop_assert_eq!(out, &p.previous);
        } else if d.triggered {
            let pinned: Vec<usize> = d.prefiltered.iter().map(|&(u, _)| u).collect();
            let mut counts = vec![0usize; 4];
            for u in 0..nu {
                let b = out.band_of(u);
                counts[b] += 1;
                if !pinned.contains(&u) {
                    prop_assert!(p.rates.get(u, b) >= r_min, "UE {} below the floor on band {}", u, b);
                }
            }
            for (b, band) in bands.iter().enumerate() {
                prop_assert!(counts[b] <= band.ue_cap, "band {} holds {} > {}", b, counts[b], band.ue_cap);
            }
            for &(u, b) in &d.prefiltered {
                prop_assert_eq!(out.band_of(u), b);
            }
        }
    }

    #[test]
    fn zero_weight_keeps_everyone(seed in 0u64..10_000, nu in 2usize..30) {
        let p = instance(nu, 4, 0.0, seed);
        prop_assume!(p.is_feasible(&p.previous.bands()));
        let sol = solve_lp(&build_lp(&p)).unwrap();
        prop_assert!(sol.is_optimal());
        prop_assert!(sol.values[p.y_total_var()].abs() <= 1e-7);
        let x = p.distributions(&sol).unwrap();
        prop_assert!(objective_f2(&x, &p.previous).unwrap() <= 1e-6);
        for u in 0..nu {
            prop_assert!((x.get(u, p.previous.band_of(u)) - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn pareto_front_is_monotone(seed in 0u64..10_000, nu in 2usize..25) {
        let base = instance(nu, 3, 0.0, seed);
        prop_assume!(base.is_feasible(&base.previous.bands()));
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let pts: Vec<(f64, f64)> = grid
            .iter()
            .map(|&w| relaxed_parts(&AssignmentProblem { w, ..base.clone() }))
            .collect();
        for pair in pts.windows(2) {
            prop_assert!(pair[1].0 <= pair[0].0 + 1e-6, "f1 rose along the grid: {:?}", pts);
            prop_assert!(pair[1].1 >= pair[0].1 - 1e-6, "f2 fell along the grid: {:?}", pts);
        }
        let f1_full = pts[10].0;
        prop_assert!(pts.iter().all(|&(f1, _)| f1_full <= f1 + 1e-6));
        prop_assert!(pts[0].1 <= 1e-6);
    }

    #[test]
    fn prefilter_conserves_load(seed in 0u64..10_000, nu in 1usize..30, r_min in 0.0..40e6f64) {
        let p = instance(nu, 4, 0.4, seed);
        let ues = ues_for(&p);
        let pre = prefilter_infeasible(&ues, &p.rates, &p.loads, r_min);
        let pinned_load: f64 = pre.fixed.iter().map(|&(u, b)| p.loads.load(u, b)).sum();
        prop_assert!((pre.incurred.iter().sum::<f64>() - pinned_load).abs() <= 1e-12 * (1.0 + pinned_load));
        prop_assert_eq!(pre.fixed.len() + pre.remaining.len(), nu);
        for &(u, b) in &pre.fixed {
            prop_assert!(p.rates.row(u).iter().all(|&r| r < r_min));
            prop_assert_eq!(b, ues[u].best_band());
        }
        for &u in &pre.remaining {
            prop_assert!(p.rates.row(u).iter().any(|&r| r >= r_min));
        }
    }
}

#[test]
fn balanced_windows_do_not_trigger() {
    let p = instance(12, 3, 0.4, 3);
    let ues = ues_for(&p);
    let cfg = BalancerConfig {
        lbi_threshold: 1e-9,
        ..BalancerConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let d = pmlb_step(
        &window_of(&p),
        &p.previous,
        &ues,
        &p.rates,
        &bands_for(&p),
        &cfg,
        &mut rng,
    )
    .unwrap();
    assert!(!d.triggered);
    assert_eq!(d.handover_count, 0);
    assert_eq!(d.new_assignment, p.previous);
    assert_eq!(d.distributions, p.previous);
    assert!(d.objective_parts.is_none());
}

#[test]
fn milp_dominates_both_roundings() {
    for seed in 0..6 {
        let p = instance(10, 3, 0.6, seed);
        let (_, milp) = round_milp(&p, MilpOptions::default()).unwrap();
        let sol = solve_lp(&build_lp(&p)).unwrap();
        let dist = p.symmetrize(&p.distributions(&sol).unwrap()).unwrap();
        let det = p
            .scalarized(&round_deterministic(&dist, &p).unwrap())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mean = (0..100)
            .map(|_| {
                p.scalarized(&round_probabilistic(&dist, &p, &mut rng).unwrap())
                    .unwrap()
            })
            .sum::<f64>()
            / 100.0;
        assert!(sol.objective_value <= milp.objective_value + 1e-6);
        assert!(
            milp.objective_value <= det + 1e-9,
            "seed {seed}: milp {} det {det}",
            milp.objective_value
        );
        assert!(
            milp.objective_value <= mean + 1e-9,
            "seed {seed}: milp {} prob {mean}",
            milp.objective_value
        );
    }
}

#[test]
fn milp_pipeline_matches_exhaustive_search() {
    let mut checked = 0;
    for seed in 0..10 {
        let p = instance(6, 3, 0.8, seed);
        let ues = ues_for(&p);
        let cfg = BalancerConfig {
            w: 0.8,
            r_min: p.r_min,
            lbi_threshold: 1.0,
            rounding: Rounding::Milp,
            ..BalancerConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = pmlb_step(
            &window_of(&p),
            &p.previous,
            &ues,
            &p.rates,
            &bands_for(&p),
            &cfg,
            &mut rng,
        )
        .unwrap();
        if !d.triggered {
            continue;
        }
        let (best, _) = common::brute_force(&p).unwrap();
        let got = p.scalarized(&d.new_assignment).unwrap();
        assert!(
            (got - best).abs() <= 1e-9,
            "seed {seed}: pipeline {got} oracle {best}"
        );
        checked += 1;
    }
    assert!(checked >= 5, "only {checked} instances triggered");
}

#[test]
fn hard_previous_is_required() {
    let mut p = instance(4, 3, 0.4, 1);
    p.previous = AssignmentMatrix::from_rows(
        vec![vec![0.5, 0.5, 0.0]; 4],
        pmlb_core::model::AssignmentMode::Stochastic,
    )
    .unwrap();
    assert!(p.validate().is_err());
}
