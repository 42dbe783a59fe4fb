//! The probabilistic balancing pipeline and baseline policies.
//!
//! [`pmlb_step`] runs one balancing instant: check the load balancing index
//! against its threshold, pin UEs that cannot reach the rate floor anywhere to
//! their best-quality band, average the observed loads, solve the relaxed
//! assignment LP and round its rows into a hard assignment.

mod baselines;
mod instance;
mod problem;
mod rounding;
mod study;

use std::collections::VecDeque;

use log::{debug, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baselines::{baseline_a2_mlb, baseline_no_mlb, baseline_rule_based, RuleBasedParams};
pub use instance::{band_layout, random_instance, InstanceParams};
pub use problem::{build_lp, AssignmentProblem, Normalization};
pub use rounding::{repair, round_deterministic, round_milp, round_probabilistic};
pub use study::{pareto_point, rounding_study, ParetoPoint, RoundingRow};

use crate::lp::{solve_lp, LpError, LpStatus, MilpOptions};
use crate::model::{lbi, AssignmentMatrix, Band, LoadSample, ModelError, RateMatrix, UeState};

#[derive(Debug, Error)]
pub enum BalancerError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("load window is empty: at least one observation is needed")]
    EmptyWindow,
    #[error("sample at t={found} is older than the window tail at t={last}")]
    OutOfOrder { last: f64, found: f64 },
    #[error("invalid balancer setting: {0}")]
    Config(String),
    #[error("rounding repair failed: bands {bands:?} stay above their UE caps")]
    RepairFailed { bands: Vec<usize> },
    #[error("branch and bound found no integral solution (status {status:?})")]
    NoIntegralSolution { status: LpStatus },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    Probabilistic,
    Deterministic,
    Milp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BalancerConfig {
    /// Weight of the max-load objective; the handover objective gets `1 - w`.
    pub w: f64,
    /// Optimization period in seconds.
    pub delta_t: f64,
    pub lbi_threshold: f64,
    /// Minimum rate in bits/s.
    pub r_min: f64,
    /// Multiplier on the PRB-proportional share defining each band's UE cap.
    pub ue_cap_factor: f64,
    pub rounding: Rounding,
    pub normalization: Normalization,
    pub milp_node_limit: usize,
    /// Serving quality (dB) below which the A2 baseline moves a UE.
    pub a2_threshold: f64,
    pub rule_based: RuleBasedParams,
}

impl Default for BalancerConfig {
    fn default() -> Self {
        Self {
            w: 0.4,
            delta_t: 120.0,
            lbi_threshold: 0.8,
            r_min: 1e6,
            ue_cap_factor: 1.2,
            rounding: Rounding::Probabilistic,
            normalization: Normalization::WorstCase,
            milp_node_limit: crate::lp::DEFAULT_NODE_LIMIT,
            a2_threshold: -6.0,
            rule_based: RuleBasedParams::default(),
        }
    }
}

impl BalancerConfig {
    pub fn validate(&self) -> Result<(), BalancerError> {
        let bad = |msg: String| Err(BalancerError::Config(msg));
        if !(0.0..=1.0).contains(&self.w) {
            return bad(format!("w = {} outside [0, 1]", self.w));
        }
        if !(self.lbi_threshold > 0.0 && self.lbi_threshold <= 1.0) {
            return bad(format!(
                "lbi_threshold = {} outside (0, 1]",
                self.lbi_threshold
            ));
        }
        if !(self.delta_t > 0.0) || !self.delta_t.is_finite() {
            return bad(format!("delta_t = {} must be positive", self.delta_t));
        }
        if !(self.r_min >= 0.0) || !self.r_min.is_finite() {
            return bad(format!("r_min = {} must be nonnegative", self.r_min));
        }
        if !(self.ue_cap_factor > 0.0) || !self.ue_cap_factor.is_finite() {
            return bad(format!(
                "ue_cap_factor = {} must be positive",
                self.ue_cap_factor
            ));
        }
        if self.milp_node_limit == 0 {
            return bad("milp_node_limit must be at least 1".into());
        }
        if !(self.rule_based.gap >= 0.0) {
            return bad(format!(
                "rule_based.gap = {} must be nonnegative",
                self.rule_based.gap
            ));
        }
        Ok(())
    }
}

/// Load observations over the last optimization period.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadWindow {
    samples: VecDeque<LoadSample>,
    capacity: usize,
}

impl LoadWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            samples: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        }
    }

    /// Append a sample, dropping the oldest one when full.
    pub fn push(&mut self, sample: LoadSample) -> Result<(), BalancerError> {
        if let Some(last) = self.samples.back() {
            if sample.timestamp < last.timestamp {
                return Err(BalancerError::OutOfOrder {
                    last: last.timestamp,
                    found: sample.timestamp,
                });
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn samples(&self) -> impl Iterator<Item = &LoadSample> {
        self.samples.iter()
    }
}

/// Mean per-band load vectors over the window; incurred loads are zero.
pub fn estimate_expected_loads(window: &LoadWindow) -> Result<LoadSample, BalancerError> {
    let first = window.samples.front().ok_or(BalancerError::EmptyWindow)?;
    let (nb, nu) = (first.n_bands(), first.n_ues());
    let mut sum = vec![vec![0.0; nu]; nb];
    for s in &window.samples {
        if s.n_bands() != nb || s.n_ues() != nu {
            return Err(ModelError::DimensionMismatch {
                expected: nb * nu,
                found: s.n_bands() * s.n_ues(),
            }
            .into());
        }
        for (acc, col) in sum.iter_mut().zip(&s.per_band_loads) {
            for (a, v) in acc.iter_mut().zip(col) {
                *a += v;
            }
        }
    }
    let n = window.len() as f64;
    for col in &mut sum {
        for v in col.iter_mut() {
            *v /= n;
        }
    }
    let last = window.samples.back().map_or(0.0, |s| s.timestamp);
    Ok(LoadSample::new(sum, vec![0.0; nb], last)?)
}

/// UEs pinned before optimization and the load they commit.
#[derive(Debug, Clone, PartialEq)]
pub struct Prefilter {
    /// `(ue, band)` pairs, UE positions in the input order.
    pub fixed: Vec<(usize, usize)>,
    /// Per-band load of the pinned UEs.
    pub incurred: Vec<f64>,
    /// UEs left for the optimization, ascending.
    pub remaining: Vec<usize>,
}

/// Pin every UE whose best estimated rate is below `r_min` to its best-quality
/// band (lowest index on ties) and add its expected load there.
pub fn prefilter_infeasible(
    ues: &[UeState],
    rate_estimates: &RateMatrix,
    loads: &LoadSample,
    r_min: f64,
) -> Prefilter {
    let mut out = Prefilter {
        fixed: Vec::new(),
        incurred: vec![0.0; loads.n_bands()],
        remaining: Vec::new(),
    };
    for (u, ue) in ues.iter().enumerate() {
        let best_rate = rate_estimates
            .row(u)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if best_rate < r_min {
            let b = ue.best_band();
            out.incurred[b] += loads.load(u, b);
            out.fixed.push((u, b));
        } else {
            out.remaining.push(u);
        }
    }
    out
}

/// Why a triggered step kept the previous assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    LpNotSolved(String),
    RoundingFailed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceDecision {
    pub new_assignment: AssignmentMatrix,
    /// LP row distributions (pinned UEs one-hot); the previous assignment when
    /// not triggered.
    pub distributions: AssignmentMatrix,
    pub prefiltered: Vec<(usize, usize)>,
    pub handover_count: usize,
    pub triggered: bool,
    /// Index computed on the expected loads under the previous assignment.
    pub lbi: f64,
    /// Normalized (f1, f2) of the optimized UEs under the new assignment.
    pub objective_parts: Option<(f64, f64)>,
    pub fallback: Option<Fallback>,
}

impl BalanceDecision {
    fn unchanged(previous: &AssignmentMatrix, lbi: f64, triggered: bool) -> Self {
        Self {
            new_assignment: previous.clone(),
            distributions: previous.clone(),
            prefiltered: Vec::new(),
            handover_count: 0,
            triggered,
            lbi,
            objective_parts: None,
            fallback: None,
        }
    }
}

/// Count of UEs whose band differs between two hard assignments.
pub fn handovers_between(a: &AssignmentMatrix, b: &AssignmentMatrix) -> usize {
    a.bands()
        .iter()
        .zip(b.bands())
        .filter(|(x, y)| **x != *y)
        .count()
}

/// One balancing instant. `rates` are the rate estimates for the window and
/// `bands[b].ue_cap` is the cap on band `b`.
pub fn pmlb_step<R: Rng + ?Sized>(
    window: &LoadWindow,
    previous: &AssignmentMatrix,
    ues: &[UeState],
    rates: &RateMatrix,
    bands: &[Band],
    cfg: &BalancerConfig,
    rng: &mut R,
) -> Result<BalanceDecision, BalancerError> {
    cfg.validate()?;
    let expected = estimate_expected_loads(window)?;
    let index = lbi(&expected.band_totals(previous)?);
    if index >= cfg.lbi_threshold {
        return Ok(BalanceDecision::unchanged(previous, index, false));
    }

    let nb = bands.len();
    let pre = prefilter_infeasible(ues, rates, &expected, cfg.r_min);
    let mut caps: Vec<usize> = bands.iter().map(|b| b.ue_cap).collect();
    for &(_, b) in &pre.fixed {
        caps[b] = caps[b].saturating_sub(1);
    }
    let mut loads = expected.select_ues(&pre.remaining);
    loads.incurred_loads = pre.incurred.clone();
    let problem = AssignmentProblem {
        loads,
        rates: rates.select_rows(&pre.remaining),
        previous: previous.select_rows(&pre.remaining),
        caps,
        r_min: cfg.r_min,
        w: cfg.w,
        normalization: cfg.normalization,
    };
    problem.validate()?;

    let fallback = |reason: Fallback| {
        warn!(
            "balancing at t={} kept the previous assignment: {reason:?}",
            expected.timestamp
        );
        let mut d = BalanceDecision::unchanged(previous, index, true);
        d.prefiltered = pre.fixed.clone();
        d.fallback = Some(reason);
        d
    };

    let sol = solve_lp(&build_lp(&problem))?;
    if !sol.is_optimal() {
        return Ok(fallback(Fallback::LpNotSolved(format!("{:?}", sol.status))));
    }
    let dist = problem.symmetrize(&problem.distributions(&sol)?)?;
    let rounded = match cfg.rounding {
        Rounding::Probabilistic => round_probabilistic(&dist, &problem, rng),
        Rounding::Deterministic => round_deterministic(&dist, &problem),
        Rounding::Milp => round_milp(
            &problem,
            MilpOptions {
                node_limit: cfg.milp_node_limit,
                ..MilpOptions::default()
            },
        )
        .map(|(a, _)| a),
    };
    let hard = match rounded {
        Ok(h) => h,
        Err(
            e @ (BalancerError::RepairFailed { .. } | BalancerError::NoIntegralSolution { .. }),
        ) => {
            return Ok(fallback(Fallback::RoundingFailed(e.to_string())));
        }
        Err(e) => return Err(e),
    };
    let parts = problem.objective_parts(&hard)?;

    let n = ues.len();
    let mut band_of = vec![0usize; n];
    let mut dist_rows = vec![vec![0.0; nb]; n];
    for &(u, b) in &pre.fixed {
        band_of[u] = b;
        dist_rows[u][b] = 1.0;
    }
    for (i, &u) in pre.remaining.iter().enumerate() {
        band_of[u] = hard.band_of(i);
        dist_rows[u] = dist.row(i).to_vec();
    }
    let new_assignment = AssignmentMatrix::from_bands(&band_of, nb)?;
    let handover_count = handovers_between(&new_assignment, previous);
    debug!(
        "balancing at t={}: lbi {index:.3}, {} pinned, {handover_count} handovers",
        expected.timestamp,
        pre.fixed.len()
    );
    Ok(BalanceDecision {
        new_assignment,
        distributions: AssignmentMatrix::from_rows(
            dist_rows,
            crate::model::AssignmentMode::Stochastic,
        )?,
        prefiltered: pre.fixed,
        handover_count,
        triggered: true,
        lbi: index,
        objective_parts: Some(parts),
        fallback: None,
    })
}
