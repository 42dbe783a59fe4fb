//! Time-stepped multi-cell simulator.
//!
//! Cells are independent. Each holds a fixed UE population (optionally with
//! churn that replaces departing UEs), a CQI process per (UE, band) pair and
//! Poisson packet arrivals. Bands serve their UEs with proportional-fair time
//! sharing. At every optimization boundary the configured policy picks the
//! next assignment and the implied handovers interrupt service.
//!
//! Every cell uses separate RNG streams for placement, channel and traffic,
//! and balancing. Different policies therefore see the same users, channels
//! and arrivals for a given seed.

mod cell;
mod channel;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cell::{apply_handovers, step, CellState, HandoverOutcome, StepRecord, PF_EMA};
pub use channel::{cqi_from_sinr, realize_rates, ChannelConfig, ChannelState};

use crate::balancer::{
    baseline_a2_mlb, baseline_no_mlb, baseline_rule_based, estimate_expected_loads, pmlb_step,
    prefilter_infeasible, repair, AssignmentProblem, BalancerConfig, BalancerError, LoadWindow,
};
use crate::kpi::{aggregate_window, KpiError, KpiReport, KpiRow, ReportMetadata};
use crate::model::{proportional_caps, AssignmentMatrix, Band, ModelError, RateMatrix, UeState};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error(transparent)]
    Balancer(#[from] BalancerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kpi(#[from] KpiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Pmlb,
    NoMlb,
    A2Mlb,
    RuleBased,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Pmlb,
        Algorithm::NoMlb,
        Algorithm::A2Mlb,
        Algorithm::RuleBased,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pmlb => "pmlb",
            Algorithm::NoMlb => "no_mlb",
            Algorithm::A2Mlb => "a2_mlb",
            Algorithm::RuleBased => "rule_based",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                format!("unknown algorithm {s:?} (expected pmlb, no_mlb, a2_mlb or rule_based)")
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub bandwidth_hz: f64,
    pub n_prb: u32,
    /// Added to every UE's mean SINR on this band.
    #[serde(default)]
    pub sinr_offset_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChurnConfig {
    pub enabled: bool,
    /// Mean time a UE stays before it is replaced by a new arrival.
    pub mean_dwell_s: f64,
}

impl Default for ChurnConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            mean_dwell_s: 600.0,
        }
    }
}

/// Four bands: two wide low-frequency carriers with the best coverage and
/// two weaker ones.
pub fn default_bands() -> Vec<BandConfig> {
    [
        (20e6, 100, 0.0),
        (10e6, 50, 0.0),
        (5e6, 25, -4.0),
        (10e6, 50, -4.0),
    ]
    .into_iter()
    .map(|(bandwidth_hz, n_prb, sinr_offset_db)| BandConfig {
        bandwidth_hz,
        n_prb,
        sinr_offset_db,
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    pub n_cells: usize,
    pub bands: Vec<BandConfig>,
    pub n_ues_per_cell: usize,
    /// Mean time between packets of one UE.
    pub inter_arrival_ms: f64,
    pub packet_size_bytes: u32,
    /// Episode length in seconds.
    pub sim_duration: f64,
    /// Simulation step in seconds.
    pub step: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub ho_interruption_ms: f64,
    pub balancer: BalancerConfig,
    pub channel: ChannelConfig,
    pub churn: ChurnConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "A".into(),
            n_cells: 3,
            bands: default_bands(),
            n_ues_per_cell: 400,
            inter_arrival_ms: 20.0,
            packet_size_bytes: 1500,
            sim_duration: 7200.0,
            step: 0.1,
            seed: 1,
            algorithm: Algorithm::Pmlb,
            ho_interruption_ms: 50.0,
            balancer: BalancerConfig::default(),
            channel: ChannelConfig::default(),
            churn: ChurnConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Built-in scenarios: `A` (400 UEs, 20 ms), `B` (400 UEs, 50 ms) and
    /// `C` (200 UEs, 50 ms) per cell.
    pub fn named(name: &str) -> Result<Self, SimError> {
        let (n_ues_per_cell, inter_arrival_ms) = match name.to_ascii_uppercase().as_str() {
            "A" => (400, 20.0),
            "B" => (400, 50.0),
            "C" => (200, 50.0),
            _ => {
                return Err(SimError::Config(format!(
                    "unknown scenario {name:?} (expected A, B or C)"
                )))
            }
        };
        Ok(Self {
            name: name.to_ascii_uppercase(),
            n_ues_per_cell,
            inter_arrival_ms,
            ..Self::default()
        })
    }

    /// The same scenario with `n_ues` UEs per cell. Inter-arrival times scale
    /// so the offered load per cell is unchanged.
    pub fn scaled(&self, n_ues: usize) -> Self {
        Self {
            inter_arrival_ms: self.inter_arrival_ms * n_ues as f64 / self.n_ues_per_cell as f64,
            n_ues_per_cell: n_ues,
            ..self.clone()
        }
    }

    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Parse {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Offered traffic per cell in bits/s.
    pub fn offered_load_bps(&self) -> f64 {
        self.n_ues_per_cell as f64 * self.packet_size_bytes as f64 * 8.0 * 1000.0
            / self.inter_arrival_ms
    }

    pub fn total_steps(&self) -> usize {
        (self.sim_duration / self.step).round() as usize
    }

    pub fn window_steps(&self) -> usize {
        (self.balancer.delta_t / self.step).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.n_cells == 0 {
            return bad("n_cells must be at least 1".into());
        }
        if self.n_ues_per_cell == 0 {
            return bad("n_ues_per_cell must be at least 1".into());
        }
        if self.bands.is_empty() {
            return bad("at least one band is required".into());
        }
        for (b, band) in self.bands.iter().enumerate() {
            if !(band.bandwidth_hz > 0.0) || band.n_prb == 0 || !band.sinr_offset_db.is_finite() {
                return bad(format!(
                    "band {b}: bandwidth and PRB count must be positive"
                ));
            }
        }
        if !(self.inter_arrival_ms > 0.0) || !self.inter_arrival_ms.is_finite() {
            return bad(format!(
                "inter_arrival_ms = {} must be positive",
                self.inter_arrival_ms
            ));
        }
        if self.packet_size_bytes == 0 {
            return bad("packet_size_bytes must be positive".into());
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return bad(format!("step = {} must be positive", self.step));
        }
        // Zero is an empty episode; any other duration must cover a step.
        if !(self.sim_duration == 0.0 || self.sim_duration >= self.step)
            || !self.sim_duration.is_finite()
        {
            return bad(format!(
                "sim_duration = {} must be 0 or cover at least one step",
                self.sim_duration
            ));
        }
        let ratio = self.balancer.delta_t / self.step;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 {
            return bad(format!(
                "balancer.delta_t = {} must be a positive multiple of step = {}",
                self.balancer.delta_t, self.step
            ));
        }
        if !(self.ho_interruption_ms >= 0.0) || !self.ho_interruption_ms.is_finite() {
            return bad(format!(
                "ho_interruption_ms = {} must be nonnegative",
                self.ho_interruption_ms
            ));
        }
        if self.churn.enabled && !(self.churn.mean_dwell_s > 0.0) {
            return bad("churn.mean_dwell_s must be positive".into());
        }
        self.channel.validate().map_err(SimError::Config)?;
        self.balancer.validate()?;
        Ok(())
    }

    /// Bands with UE caps proportional to their PRBs.
    pub fn band_list(&self) -> Vec<Band> {
        let prbs: Vec<u32> = self.bands.iter().map(|b| b.n_prb).collect();
        let caps = proportional_caps(&prbs, self.n_ues_per_cell, self.balancer.ue_cap_factor);
        self.bands
            .iter()
            .zip(caps)
            .enumerate()
            .map(|(id, (b, cap))| {
                Band::new(id, b.bandwidth_hz, b.n_prb, cap).expect("validated band")
            })
            .collect()
    }
}

const STREAM_PLACEMENT: u64 = 0;
const STREAM_STEP: u64 = 1;
const STREAM_BALANCER: u64 = 2;

fn cell_rng(seed: u64, cell: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell as u64 * 4 + stream);
    rng
}

/// A freshly placed cell with every UE on its no-balancing band.
pub fn init_cell(cfg: &ScenarioConfig, cell: usize) -> Result<CellState, SimError> {
    let mut rng = cell_rng(cfg.seed, cell, STREAM_PLACEMENT);
    let channel = ChannelState::place(&cfg.channel, &cfg.bands, cfg.n_ues_per_cell, &mut rng);
    let lambda = 1000.0 / cfg.inter_arrival_ms;
    let bits = cfg.packet_size_bytes as f64 * 8.0;
    let mut ues = (0..cfg.n_ues_per_cell)
        .map(|u| UeState::new(u, lambda, bits, channel.quality(u), 0))
        .collect::<Result<Vec<_>, _>>()?;
    let attach = baseline_no_mlb(&ues);
    for (u, ue) in ues.iter_mut().enumerate() {
        ue.current_band = attach.band_of(u);
    }
    let mut state = CellState::new(
        ues,
        channel,
        cfg.band_list(),
        attach,
        cfg.step,
        cfg.ho_interruption_ms,
    )?;
    if cfg.churn.enabled {
        state.churn = Some(cell::CellChurn {
            mean_dwell_s: cfg.churn.mean_dwell_s,
            channel: cfg.channel.clone(),
            bands: cfg.bands.clone(),
        });
    }
    Ok(state)
}

/// Mean of the rate matrices seen over a window.
#[derive(Debug, Clone)]
struct RateAccumulator {
    sum: Vec<f64>,
    n: usize,
    n_ues: usize,
    n_bands: usize,
}

impl RateAccumulator {
    fn new(n_ues: usize, n_bands: usize) -> Self {
        Self {
            sum: vec![0.0; n_ues * n_bands],
            n: 0,
            n_ues,
            n_bands,
        }
    }

    fn add(&mut self, r: &RateMatrix) {
        for u in 0..self.n_ues {
            for (b, v) in r.row(u).iter().enumerate() {
                self.sum[u * self.n_bands + b] += v;
            }
        }
        self.n += 1;
    }

    fn mean(&self) -> RateMatrix {
        let n = self.n.max(1) as f64;
        RateMatrix::from_flat(
            self.n_ues,
            self.n_bands,
            self.sum.iter().map(|s| s / n).collect(),
        )
        .expect("means of positive rates")
    }

    fn reset(&mut self) {
        self.sum.iter_mut().for_each(|s| *s = 0.0);
        self.n = 0;
    }
}

/// Next assignment chosen by the configured policy at a window boundary.
fn decide(
    cfg: &ScenarioConfig,
    state: &CellState,
    window: &LoadWindow,
    rates: &RateMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<AssignmentMatrix, SimError> {
    let current = &state.assignment;
    Ok(match cfg.algorithm {
        Algorithm::NoMlb => current.clone(),
        Algorithm::A2Mlb => baseline_a2_mlb(&state.ues, current, cfg.balancer.a2_threshold),
        Algorithm::RuleBased => {
            let expected = estimate_expected_loads(window)?;
            baseline_rule_based(
                &state.ues,
                &expected,
                current,
                rng,
                &cfg.balancer.rule_based,
            )
        }
        Algorithm::Pmlb => {
            pmlb_step(
                window,
                current,
                &state.ues,
                rates,
                &state.bands,
                &cfg.balancer,
                rng,
            )?
            .new_assignment
        }
    })
}

/// Window KPI rows of one cell.
pub fn run_cell(cfg: &ScenarioConfig, cell: usize) -> Result<Vec<KpiRow>, SimError> {
    let mut state = init_cell(cfg, cell)?;
    let mut step_rng = cell_rng(cfg.seed, cell, STREAM_STEP);
    let mut bal_rng = cell_rng(cfg.seed, cell, STREAM_BALANCER);
    let (n_steps, per_window) = (cfg.total_steps(), cfg.window_steps());
    let mut window = LoadWindow::new(per_window);
    let mut rates = RateAccumulator::new(cfg.n_ues_per_cell, cfg.bands.len());
    let mut records = Vec::with_capacity(per_window);
    let mut rows = Vec::new();
    let mut pending: Option<AssignmentMatrix> = None;

    for k in 0..n_steps {
        let next = pending.take().unwrap_or_else(|| state.assignment.clone());
        records.push(step(&mut state, &next, &mut step_rng)?);
        window.push(state.last_loads().expect("set by step").clone())?;
        rates.add(state.last_rates().expect("set by step"));

        let boundary = (k + 1) % per_window == 0;
        if boundary || k + 1 == n_steps {
            rows.push(aggregate_window(&records, records.len() as f64 * cfg.step)?);
            records.clear();
        }
        if boundary && k + 1 < n_steps {
            pending = Some(decide(cfg, &state, &window, &rates.mean(), &mut bal_rng)?);
            rates.reset();
        }
    }
    Ok(rows)
}

/// A frozen balancing instant for objective-space studies.
///
/// Cell 0 runs one optimization window with every UE on its attach band.
/// The window's mean loads and rates define the problem over the UEs that
/// pass the prefilter, with pinned UEs counted against the caps. The start
/// assignment is the attach assignment made feasible: UEs below the rate
/// floor go to their fastest allowed band and over-full bands are repaired.
/// With a feasible start, `w = 0` is met by moving nobody.
pub fn snapshot_problem(cfg: &ScenarioConfig, w: f64) -> Result<AssignmentProblem, SimError> {
    cfg.validate()?;
    let mut state = init_cell(cfg, 0)?;
    let mut rng = cell_rng(cfg.seed, 0, STREAM_STEP);
    let per_window = cfg.window_steps();
    let mut window = LoadWindow::new(per_window);
    let mut rates = RateAccumulator::new(cfg.n_ues_per_cell, cfg.bands.len());
    let attach = state.assignment.clone();
    for _ in 0..per_window {
        step(&mut state, &attach, &mut rng)?;
        window.push(state.last_loads().expect("set by step").clone())?;
        rates.add(state.last_rates().expect("set by step"));
    }
    let rates = rates.mean();
    let expected = estimate_expected_loads(&window)?;
    let pre = prefilter_infeasible(&state.ues, &rates, &expected, cfg.balancer.r_min);
    let mut caps: Vec<usize> = state.bands.iter().map(|b| b.ue_cap).collect();
    for &(_, b) in &pre.fixed {
        caps[b] = caps[b].saturating_sub(1);
    }
    let mut loads = expected.select_ues(&pre.remaining);
    loads.incurred_loads = pre.incurred.clone();
    let sub_rates = rates.select_rows(&pre.remaining);
    let nb = cfg.bands.len();
    let mut bands: Vec<usize> = pre.remaining.iter().map(|&u| attach.band_of(u)).collect();
    let mut problem = AssignmentProblem {
        loads,
        rates: sub_rates,
        previous: AssignmentMatrix::from_bands(&bands, nb)?,
        caps,
        r_min: cfg.balancer.r_min,
        w,
        normalization: cfg.balancer.normalization,
    };
    for (i, b) in bands.iter_mut().enumerate() {
        if !problem.allowed(i, *b) {
            *b = (0..nb)
                .filter(|&c| problem.allowed(i, c))
                .max_by(|&x, &y| problem.rates.get(i, x).total_cmp(&problem.rates.get(i, y)))
                .expect("prefilter keeps only UEs with an allowed band");
        }
    }
    let one_hot = AssignmentMatrix::from_bands(&bands, nb)?;
    repair(&mut bands, &one_hot, &problem)?;
    problem.previous = AssignmentMatrix::from_bands(&bands, nb)?;
    problem.validate()?;
    Ok(problem)
}

/// Combines per-cell rows of one window: throughput is averaged over all
/// UEs, the minimum taken over all UEs, handover counters summed, and the
/// load balancing index and band loads averaged over cells.
fn combine_cells(rows: &[&KpiRow]) -> KpiRow {
    let n = rows.len() as f64;
    let nb = rows[0].per_band_load.len();
    KpiRow {
        t: rows[0].t,
        avg_throughput: rows.iter().map(|r| r.avg_throughput).sum::<f64>() / n,
        min_throughput: rows
            .iter()
            .map(|r| r.min_throughput)
            .fold(f64::INFINITY, f64::min),
        ho_count: rows.iter().map(|r| r.ho_count).sum(),
        interruption_ms: rows.iter().map(|r| r.interruption_ms).sum(),
        lbi: rows.iter().map(|r| r.lbi).sum::<f64>() / n,
        per_band_load: (0..nb)
            .map(|b| rows.iter().map(|r| r.per_band_load[b]).sum::<f64>() / n)
            .collect(),
    }
}

/// Runs every cell of the scenario and reports per-window KPIs.
/// The result depends only on the configuration, seed included.
pub fn run_episode(cfg: &ScenarioConfig) -> Result<KpiReport, SimError> {
    cfg.validate()?;
    let per_cell = (0..cfg.n_cells)
        .map(|c| run_cell(cfg, c))
        .collect::<Result<Vec<_>, _>>()?;
    let windows = (0..per_cell.first().map_or(0, Vec::len))
        .map(|i| combine_cells(&per_cell.iter().map(|rows| &rows[i]).collect::<Vec<_>>()))
        .collect();
    let report = KpiReport::new(
        ReportMetadata {
            scenario: cfg.name.clone(),
            algorithm: cfg.algorithm.to_string(),
            seed: cfg.seed,
            n_cells: cfg.n_cells,
            n_ues_per_cell: cfg.n_ues_per_cell,
            n_bands: cfg.bands.len(),
            window_s: cfg.balancer.delta_t,
            ho_interruption_ms: cfg.ho_interruption_ms,
        },
        windows,
    );
    info!(
        "scenario {} {} seed {}: avg {:.3e} b/s, lbi {:.3}, {} handovers",
        cfg.name,
        cfg.algorithm,
        cfg.seed,
        report.aggregates.avg_throughput,
        report.aggregates.lbi,
        report.aggregates.total_ho_count
    );
    Ok(report)
}
