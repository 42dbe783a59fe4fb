use pmlb_core::model::{cqi_rate, AssignmentMatrix, Band, UeState, CQI_EFFICIENCY};
use pmlb_core::sim::{
    apply_handovers, init_cell, realize_rates, run_episode, step, Algorithm, CellState,
    ChannelState, ScenarioConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(name: &str, n_ues: usize, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::named(name).unwrap().scaled(n_ues);
    cfg.seed = seed;
    cfg.n_cells = 1;
    cfg.sim_duration = 30.0;
    cfg.balancer.delta_t = 5.0;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn service_is_conserved_and_capacity_bounded(
        seed in 0u64..1000,
        n_ues in 1usize..25,
        scenario in prop::sample::select(vec!["A", "B", "C"]),
        ho_ms in 0.0..300.0f64,
    ) {
        let mut cfg = small(scenario, n_ues, seed);
        cfg.ho_interruption_ms = ho_ms;
        let mut cell = init_cell(&cfg, 0).unwrap();
        let nb = cell.bands.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut served = vec![0.0; n_ues];
        let mut arrived = vec![0.0; n_ues];
        let mut backlog = vec![0.0; n_ues];
        for k in 0..200 {
            let next = if k % 20 == 0 {
                let bands: Vec<usize> = (0..n_ues).map(|_| rng.random_range(0..nb)).collect();
                AssignmentMatrix::from_bands(&bands, nb).unwrap()
            } else {
                cell.assignment.clone()
            };
            let r = step(&mut cell, &next, &mut rng).unwrap();
            let rates = cell.last_rates().unwrap();
            for u in 0..n_ues {
                prop_assert!(r.served_bits[u] >= 0.0 && r.arrived_bits[u] >= 0.0 && r.backlog_bits[u] >= 0.0);
                prop_assert!(r.served_bits[u] <= backlog[u] + r.arrived_bits[u] + 1e-6);
                served[u] += r.served_bits[u];
                arrived[u] += r.arrived_bits[u];
                prop_assert!(served[u] <= arrived[u] + 1e-6);
                prop_assert!((arrived[u] - served[u] - r.backlog_bits[u]).abs() <= 1e-6 * (1.0 + arrived[u]));
                backlog[u] = r.backlog_bits[u];
            }
            for b in 0..nb {
                let on_b: Vec<usize> = (0..n_ues).filter(|&u| cell.assignment.band_of(u) == b).collect();
                let total: f64 = on_b.iter().map(|&u| r.served_bits[u]).sum();
                let best = on_b.iter().map(|&u| rates.get(u, b)).fold(0.0, f64::max);
                prop_assert!(total <= best * cfg.step * (1.0 + 1e-12) + 1e-9);
            }
        }
    }

    #[test]
    fn rates_are_discrete_and_seeded(seed in 0u64..1000, n_ues in 1usize..20) {
        let cfg = small("A", n_ues, seed);
        let bands = cfg.band_list();
        let mut a = init_cell(&cfg, 0).unwrap().channel;
        let mut b = a.clone();
        let (mut ra, mut rb) = (ChaCha8Rng::seed_from_u64(seed), ChaCha8Rng::seed_from_u64(seed));
        for _ in 0..20 {
            let x = realize_rates(&mut a, &bands, &mut ra);
            prop_assert_eq!(&x, &realize_rates(&mut b, &bands, &mut rb));
            for u in 0..n_ues {
                for (bi, band) in bands.iter().enumerate() {
                    let r = x.get(u, bi);
                    prop_assert!(CQI_EFFICIENCY.iter().any(|e| e * band.bandwidth_hz == r));
                    let c = a.cqi(u, bi);
                    prop_assert!((1..=15).contains(&c));
                }
            }
        }
    }

    #[test]
    fn interruption_is_handovers_times_setting(
        seed in 0u64..1000,
        algorithm in prop::sample::select(Algorithm::ALL.to_vec()),
        ho_ms in 0.0..200.0f64,
    ) {
        let mut cfg = small("A", 20, seed);
        cfg.algorithm = algorithm;
        cfg.ho_interruption_ms = ho_ms;
        let r = run_episode(&cfg).unwrap();
        prop_assert_eq!(r.aggregates.total_interruption_ms, r.aggregates.total_ho_count as f64 * ho_ms);
        for w in &r.windows {
            prop_assert_eq!(w.interruption_ms, w.ho_count as f64 * ho_ms);
        }
        prop_assert_eq!(&r, &run_episode(&cfg).unwrap());
    }
}

#[test]
fn cqi_walk_is_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // Interior window, one clipped at the bottom, one at the top, and a
    // wider walk.
    let rows = vec![vec![8.0, -30.0, 40.0]];
    for span in [2u8, 4] {
        let mut ch = ChannelState::from_mean_sinr(&rows, span, &mut rng);
        let steps = 200_000;
        let mut hist = vec![[0usize; 16]; 3];
        for _ in 0..steps {
            ch.advance(&mut rng);
            for (b, h) in hist.iter_mut().enumerate() {
                h[ch.cqi(0, b) as usize] += 1;
            }
        }
        for (b, h) in hist.iter().enumerate() {
            let (lo, hi) = ch.window(0, b);
            let n = (hi - lo + 1) as f64;
            let tv: f64 = 0.5
                * (1..=15u8)
                    .map(|c| {
                        let p = if (lo..=hi).contains(&c) { 1.0 / n } else { 0.0 };
                        (h[c as usize] as f64 / steps as f64 - p).abs()
                    })
                    .sum::<f64>();
            assert!(tv <= 0.02, "span {span} band {b}: total variation {tv}");
        }
    }
}

#[test]
fn top_cqi_rate_on_the_wide_band() {
    let r = cqi_rate(15, 20e6);
    assert_eq!(r, 5.5547 * 20e6);
    assert!((r - 111.08e6).abs() / 111.08e6 < 2e-4);
}

fn one_band_cell(qualities: &[f64], lambda: f64, step_s: f64) -> CellState {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let rows: Vec<Vec<f64>> = qualities.iter().map(|&q| vec![q]).collect();
    let ch = ChannelState::from_mean_sinr(&rows, 0, &mut rng);
    let ues = (0..rows.len())
        .map(|u| UeState::new(u, lambda, 12_000.0, rows[u].clone(), 0).unwrap())
        .collect();
    let a = AssignmentMatrix::from_bands(&vec![0; rows.len()], 1).unwrap();
    let band = Band::new(0, 5e6, 25, rows.len()).unwrap();
    CellState::new(ues, ch, vec![band], a, step_s, 50.0).unwrap()
}

#[test]
fn single_ue_gets_min_of_queue_and_capacity() {
    // 5 MHz at the top CQI carries ~2.8 Mb per 100 ms; 4000 packets/s offer ~4.8 Mb.
    let mut cell = one_band_cell(&[40.0], 4000.0, 0.1);
    let a = cell.assignment.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut backlog = 0.0;
    for _ in 0..30 {
        let r = step(&mut cell, &a, &mut rng).unwrap();
        let cap = cqi_rate(15, 5e6) * 0.1;
        let expected = (backlog + r.arrived_bits[0]).min(cap);
        assert!((r.served_bits[0] - expected).abs() <= 1e-6 * cap);
        backlog = r.backlog_bits[0];
    }
    assert!(backlog > 0.0);
}

#[test]
fn idle_ue_is_not_served() {
    let mut cell = one_band_cell(&[10.0], 0.0, 0.1);
    let a = cell.assignment.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let r = step(&mut cell, &a, &mut rng).unwrap();
        assert_eq!(r.served_bits, vec![0.0]);
    }
}

#[test]
fn identical_ues_share_evenly() {
    let mut cell = one_band_cell(&[12.0, 12.0], 4000.0, 0.1);
    let a = cell.assignment.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut served = [0.0; 2];
    for _ in 0..5000 {
        let r = step(&mut cell, &a, &mut rng).unwrap();
        served[0] += r.served_bits[0];
        served[1] += r.served_bits[1];
    }
    let rel = (served[0] - served[1]).abs() / served[0].max(served[1]);
    assert!(rel <= 0.05, "served {served:?}");
}

#[test]
fn handover_bookkeeping() {
    let cfg = small("C", 6, 4);
    let mut cell = init_cell(&cfg, 0).unwrap();
    let same = cell.assignment.clone();
    let out = apply_handovers(&mut cell, &same).unwrap();
    assert_eq!((out.ho_count(), out.interruption_ms), (0, 0.0));

    let mut bands = same.bands();
    for b in bands.iter_mut().take(3) {
        *b = (*b + 1) % 4;
    }
    let next = AssignmentMatrix::from_bands(&bands, 4).unwrap();
    let out = apply_handovers(&mut cell, &next).unwrap();
    assert_eq!(out.moved, vec![0, 1, 2]);
    assert_eq!(out.interruption_ms, 150.0);
    assert!(cell.interrupted_at(0, 0.049) && !cell.interrupted_at(0, 0.05));
    assert!(!cell.interrupted_at(3, 0.0));
}

#[test]
fn scenario_examples() {
    let cfg = small("C", 30, 9);
    let mut no_mlb = cfg.clone();
    no_mlb.algorithm = Algorithm::NoMlb;
    assert_eq!(run_episode(&no_mlb).unwrap().aggregates.total_ho_count, 0);

    let r = run_episode(&cfg).unwrap();
    let json_a = serde_json::to_string(&r).unwrap();
    let json_b = serde_json::to_string(&run_episode(&cfg).unwrap()).unwrap();
    assert_eq!(json_a, json_b);
    for w in &r.windows {
        assert!(w.min_throughput <= w.avg_throughput);
        assert!(w.lbi >= 0.25 - 1e-12 && w.lbi <= 1.0);
    }
}
