//! Seeded random assignment instances for solver studies and tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::problem::{AssignmentProblem, Normalization};
use crate::model::{argmax, cqi_rate, proportional_caps, AssignmentMatrix, LoadSample, RateMatrix};

const BANDWIDTHS_HZ: [f64; 4] = [20e6, 10e6, 5e6, 10e6];
const PRBS: [u32; 4] = [100, 50, 25, 50];

/// Shape of generated instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceParams {
    pub n_ues: usize,
    pub n_bands: usize,
    pub w: f64,
    /// Offered load as a fraction of total cell capacity at mid-table CQI.
    pub utilization: f64,
    pub r_min: f64,
    pub ue_cap_factor: f64,
    /// When nonzero, UEs are drawn from this many (rates, offered load)
    /// profiles, as when users cluster at a few locations with the same
    /// traffic. Zero gives every UE its own draw.
    pub profiles: usize,
    /// Start every UE on the faster of bands 0 and 1, ignoring caps, as
    /// right after attach without balancing. Otherwise the start is a random
    /// cap-feasible assignment.
    pub crowded_start: bool,
}

impl InstanceParams {
    pub fn new(n_ues: usize, n_bands: usize) -> Self {
        Self {
            n_ues,
            n_bands,
            w: 0.4,
            utilization: 0.9,
            r_min: 1e6,
            ue_cap_factor: 1.2,
            profiles: 0,
            crowded_start: false,
        }
    }
}

/// Band widths and PRB counts cycle through the default four-band layout.
pub fn band_layout(n_bands: usize) -> (Vec<f64>, Vec<u32>) {
    (
        (0..n_bands).map(|b| BANDWIDTHS_HZ[b % 4]).collect(),
        (0..n_bands).map(|b| PRBS[b % 4]).collect(),
    )
}

/// A random instance. Each UE draws a base CQI and a per-band offset, an
/// offered rate around its fair share, and a random starting band among those
/// with room that meet the rate floor.
pub fn random_instance(params: &InstanceParams, seed: u64) -> AssignmentProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nu, nb) = (params.n_ues, params.n_bands);
    let (widths, prbs) = band_layout(nb);
    let caps = proportional_caps(&prbs, nu, params.ue_cap_factor);

    let capacity: f64 = widths.iter().map(|bw| bw * 2.5).sum();
    let fair_share = params.utilization * capacity / nu.max(1) as f64;
    let draw_ue = |rng: &mut ChaCha8Rng| {
        let base: i32 = rng.random_range(1..=15);
        let mut row: Vec<f64> = widths
            .iter()
            .map(|&bw| {
                let cqi = (base + rng.random_range(-3..=3)).clamp(1, 15) as u8;
                cqi_rate(cqi, bw)
            })
            .collect();
        // Every UE must meet the floor somewhere.
        if row.iter().all(|&r| r < params.r_min) {
            let widest = (0..nb)
                .max_by(|&a, &b| widths[a].total_cmp(&widths[b]))
                .unwrap_or(0);
            let cqi = (1..=15u8)
                .find(|&c| cqi_rate(c, widths[widest]) >= params.r_min)
                .unwrap_or(15);
            row[widest] = cqi_rate(cqi, widths[widest]);
        }
        let offered = fair_share * rng.random_range(0.5..1.5);
        (row, offered)
    };
    let ues: Vec<(Vec<f64>, f64)> = if params.profiles == 0 {
        (0..nu).map(|_| draw_ue(&mut rng)).collect()
    } else {
        let profiles: Vec<(Vec<f64>, f64)> =
            (0..params.profiles).map(|_| draw_ue(&mut rng)).collect();
        (0..nu)
            .map(|_| profiles[rng.random_range(0..profiles.len())].clone())
            .collect()
    };
    let load_rows: Vec<Vec<f64>> = ues
        .iter()
        .map(|(row, offered)| row.iter().map(|r| offered / r).collect())
        .collect();
    let rates: Vec<Vec<f64>> = ues.into_iter().map(|(row, _)| row).collect();

    let mut counts = vec![0usize; nb];
    let bands: Vec<usize> = if params.crowded_start {
        rates.iter().map(|row| argmax(&row[..nb.min(2)])).collect()
    } else {
        (0..nu)
            .map(|u| {
                let open: Vec<usize> = (0..nb)
                    .filter(|&b| counts[b] < caps[b] && rates[u][b] >= params.r_min)
                    .collect();
                let b = if open.is_empty() {
                    (0..nb).find(|&b| counts[b] < caps[b]).unwrap_or(0)
                } else {
                    open[rng.random_range(0..open.len())]
                };
                counts[b] += 1;
                b
            })
            .collect()
    };

    AssignmentProblem {
        loads: LoadSample::from_ue_rows(&load_rows, 0.0).expect("rectangular nonnegative loads"),
        rates: RateMatrix::from_rows(rates).expect("CQI rates are positive"),
        previous: AssignmentMatrix::from_bands(&bands, nb).expect("bands in range"),
        caps,
        r_min: params.r_min,
        w: params.w,
        normalization: Normalization::default(),
    }
}
