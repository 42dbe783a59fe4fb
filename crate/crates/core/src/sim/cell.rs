//! One cell: traffic arrivals, proportional-fair service and handovers.

use rand::Rng;

use super::channel::{realize_rates, ChannelConfig, ChannelState};
use super::{BandConfig, SimError};
use crate::model::{
    argmax, sample_demand, AssignmentMatrix, Band, LoadSample, RateMatrix, UeState,
};

/// Smoothing factor of the proportional-fair average throughput.
pub const PF_EMA: f64 = 0.1;

/// Outcome of one simulation step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// End of the step, seconds since the episode start.
    pub timestamp: f64,
    pub served_bits: Vec<f64>,
    pub arrived_bits: Vec<f64>,
    /// Queue left after service.
    pub backlog_bits: Vec<f64>,
    /// Load each band carried under the assignment in force.
    pub band_loads: Vec<f64>,
    pub handovers: usize,
    /// Interruption time booked by this step's handovers.
    pub interruption_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandoverOutcome {
    pub moved: Vec<usize>,
    pub interruption_ms: f64,
}

impl HandoverOutcome {
    pub fn ho_count(&self) -> usize {
        self.moved.len()
    }
}

/// Churn settings copied into the cell.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CellChurn {
    pub mean_dwell_s: f64,
    pub channel: ChannelConfig,
    pub bands: Vec<BandConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub ues: Vec<UeState>,
    pub channel: ChannelState,
    pub bands: Vec<Band>,
    pub assignment: AssignmentMatrix,
    pub time: f64,
    pub step_s: f64,
    pub ho_interruption_ms: f64,
    steps_done: u64,
    avg_tput: Vec<f64>,
    interrupted_until: Vec<f64>,
    last_rates: Option<RateMatrix>,
    last_loads: Option<LoadSample>,
    pub(crate) churn: Option<CellChurn>,
}

impl CellState {
    pub fn new(
        ues: Vec<UeState>,
        channel: ChannelState,
        bands: Vec<Band>,
        assignment: AssignmentMatrix,
        step_s: f64,
        ho_interruption_ms: f64,
    ) -> Result<Self, SimError> {
        let n = ues.len();
        if channel.n_ues() != n || assignment.n_ues() != n {
            return Err(SimError::Config(format!(
                "cell has {n} UEs but channel has {} and assignment {}",
                channel.n_ues(),
                assignment.n_ues()
            )));
        }
        if channel.n_bands() != bands.len() || assignment.n_bands() != bands.len() {
            return Err(SimError::Config("band counts disagree".into()));
        }
        if !assignment.is_hard() {
            return Err(SimError::Config("cell assignment must be hard".into()));
        }
        if !(step_s > 0.0) || !(ho_interruption_ms >= 0.0) {
            return Err(SimError::Config(
                "step and interruption must be positive".into(),
            ));
        }
        let mut ues = ues;
        for (u, ue) in ues.iter_mut().enumerate() {
            ue.current_band = assignment.band_of(u);
        }
        Ok(Self {
            ues,
            channel,
            bands,
            assignment,
            time: 0.0,
            step_s,
            ho_interruption_ms,
            steps_done: 0,
            avg_tput: vec![0.0; n],
            interrupted_until: vec![f64::NEG_INFINITY; n],
            last_rates: None,
            last_loads: None,
            churn: None,
        })
    }

    pub fn n_ues(&self) -> usize {
        self.ues.len()
    }

    /// Rates realized in the most recent step.
    pub fn last_rates(&self) -> Option<&RateMatrix> {
        self.last_rates.as_ref()
    }

    /// Per-UE, per-band loads observed in the most recent step.
    pub fn last_loads(&self) -> Option<&LoadSample> {
        self.last_loads.as_ref()
    }

    /// Whether UE `u` is inside its handover interruption at time `t`.
    pub fn interrupted_at(&self, u: usize, t: f64) -> bool {
        t < self.interrupted_until[u]
    }
}

/// Moves every UE whose band differs in `next` and starts its interruption.
pub fn apply_handovers(
    state: &mut CellState,
    next: &AssignmentMatrix,
) -> Result<HandoverOutcome, SimError> {
    if next.n_ues() != state.n_ues() || next.n_bands() != state.bands.len() || !next.is_hard() {
        return Err(SimError::Config(
            "handover target must be a hard assignment of the cell's shape".into(),
        ));
    }
    let mut moved = Vec::new();
    for u in 0..state.n_ues() {
        let b = next.band_of(u);
        if b != state.assignment.band_of(u) {
            moved.push(u);
            state.ues[u].current_band = b;
            state.interrupted_until[u] = state.time + state.ho_interruption_ms / 1000.0;
        }
    }
    state.assignment = next.clone();
    Ok(HandoverOutcome {
        interruption_ms: moved.len() as f64 * state.ho_interruption_ms,
        moved,
    })
}

/// Fraction of `[t0, t0 + dt)` after `until`, snapped to 0 or 1 within
/// accumulated clock error.
fn availability(t0: f64, dt: f64, until: f64) -> f64 {
    let a = (t0 + dt - until) / dt;
    if a < 1e-9 {
        0.0
    } else if a > 1.0 - 1e-9 {
        1.0
    } else {
        a
    }
}

/// Splits one step of band time among `active` UEs in proportion to their
/// weights, never giving a UE more than its cap. Returns time fractions.
fn water_fill(weights: &[f64], caps: &[f64]) -> Vec<f64> {
    let n = weights.len();
    let mut share = vec![0.0; n];
    let mut open: Vec<usize> = (0..n).filter(|&i| caps[i] > 0.0).collect();
    let mut budget = 1.0;
    while !open.is_empty() && budget > 1e-15 {
        let total: f64 = open.iter().map(|&i| weights[i]).sum();
        let saturated: Vec<usize> = open
            .iter()
            .copied()
            .filter(|&i| budget * weights[i] / total >= caps[i])
            .collect();
        if saturated.is_empty() {
            for &i in &open {
                share[i] = budget * weights[i] / total;
            }
            break;
        }
        for &i in &saturated {
            share[i] = caps[i];
            budget -= caps[i];
        }
        open.retain(|i| !saturated.contains(i));
    }
    share
}

/// Advances the cell by one step under `assignment`. Handovers implied by a
/// change of assignment happen at the start of the step.
pub fn step<R: Rng + ?Sized>(
    state: &mut CellState,
    assignment: &AssignmentMatrix,
    rng: &mut R,
) -> Result<StepRecord, SimError> {
    let outcome = if assignment != &state.assignment {
        apply_handovers(state, assignment)?
    } else {
        HandoverOutcome {
            moved: Vec::new(),
            interruption_ms: 0.0,
        }
    };
    let (nu, nb, dt, t0) = (state.n_ues(), state.bands.len(), state.step_s, state.time);

    if let Some(churn) = state.churn.take() {
        let p_leave = 1.0 - (-dt / churn.mean_dwell_s).exp();
        let mut bands = state.assignment.bands();
        let mut changed = false;
        for u in 0..nu {
            if rng.random::<f64>() < p_leave {
                state
                    .channel
                    .replace_ue(u, &churn.channel, &churn.bands, rng);
                let q = state.channel.quality(u);
                let ue = &mut state.ues[u];
                ue.channel_quality = q;
                ue.backlog_bits = 0.0;
                ue.current_band = argmax(&ue.channel_quality[..nb.min(2)]);
                bands[u] = ue.current_band;
                state.avg_tput[u] = 0.0;
                state.interrupted_until[u] = f64::NEG_INFINITY;
                changed = true;
            }
        }
        if changed {
            state.assignment = AssignmentMatrix::from_bands(&bands, nb)?;
        }
        state.churn = Some(churn);
    }

    let rates = realize_rates(&mut state.channel, &state.bands, rng);
    let arrived: Vec<f64> = state
        .ues
        .iter()
        .map(|ue| sample_demand(ue, rng, dt))
        .collect();
    for (ue, a) in state.ues.iter_mut().zip(&arrived) {
        ue.backlog_bits += a;
    }

    let mut served = vec![0.0; nu];
    let mut on_band: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for u in 0..nu {
        on_band[state.assignment.band_of(u)].push(u);
    }
    for (b, members) in on_band.iter().enumerate() {
        let active: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&u| state.ues[u].backlog_bits > 0.0)
            .collect();
        if active.is_empty() {
            continue;
        }
        let weights: Vec<f64> = active
            .iter()
            .map(|&u| rates.get(u, b) / state.avg_tput[u].max(1.0))
            .collect();
        let caps: Vec<f64> = active
            .iter()
            .map(|&u| {
                let avail = availability(t0, dt, state.interrupted_until[u]);
                avail.min(state.ues[u].backlog_bits / (rates.get(u, b) * dt))
            })
            .collect();
        for (&u, share) in active.iter().zip(water_fill(&weights, &caps)) {
            let bits = (share * rates.get(u, b) * dt).min(state.ues[u].backlog_bits);
            served[u] = bits;
            state.ues[u].backlog_bits -= bits;
        }
    }
    for u in 0..nu {
        state.avg_tput[u] = (1.0 - PF_EMA) * state.avg_tput[u] + PF_EMA * served[u] / dt;
    }

    let load_rows: Vec<Vec<f64>> = (0..nu)
        .map(|u| {
            (0..nb)
                .map(|b| arrived[u] / (rates.get(u, b) * dt))
                .collect()
        })
        .collect();
    // Exact multiples of the step, so window boundaries never drift.
    state.steps_done += 1;
    state.time = state.steps_done as f64 * dt;
    let loads = LoadSample::from_ue_rows(&load_rows, state.time)?;
    let band_loads = loads.band_totals(&state.assignment)?;
    state.last_rates = Some(rates);
    state.last_loads = Some(loads);

    Ok(StepRecord {
        timestamp: state.time,
        backlog_bits: state.ues.iter().map(|ue| ue.backlog_bits).collect(),
        served_bits: served,
        arrived_bits: arrived,
        band_loads,
        handovers: outcome.ho_count(),
        interruption_ms: outcome.interruption_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn water_fill_respects_caps_and_budget() {
        let s = water_fill(&[1.0, 1.0, 2.0], &[1.0, 0.1, 1.0]);
        assert!((s[1] - 0.1).abs() < 1e-15);
        assert!((s[0] - 0.3).abs() < 1e-12 && (s[2] - 0.6).abs() < 1e-12);
        let s = water_fill(&[1.0, 1.0], &[0.2, 0.3]);
        assert_eq!(s, vec![0.2, 0.3]);
        assert_eq!(water_fill(&[1.0], &[0.0]), vec![0.0]);
    }

    fn single_ue_cell(step_s: f64, ho_ms: f64) -> CellState {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = ChannelState::from_mean_sinr(&[vec![40.0, 40.0]], 0, &mut rng);
        let ue = UeState::new(0, 100.0, 12_000.0, ch.quality(0), 0).unwrap();
        let bands = vec![
            Band::new(0, 20e6, 100, 1).unwrap(),
            Band::new(1, 10e6, 50, 1).unwrap(),
        ];
        let a = AssignmentMatrix::from_bands(&[0], 2).unwrap();
        CellState::new(vec![ue], ch, bands, a, step_s, ho_ms).unwrap()
    }

    #[test]
    fn light_load_is_fully_served() {
        let mut cell = single_ue_cell(0.1, 50.0);
        let a = cell.assignment.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let r = step(&mut cell, &a, &mut rng).unwrap();
            assert_eq!(r.served_bits[0], r.arrived_bits[0]);
            assert_eq!(r.backlog_bits[0], 0.0);
            assert_eq!(r.handovers, 0);
        }
    }

    #[test]
    fn handover_interrupts_service() {
        let mut cell = single_ue_cell(0.01, 50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let moved = AssignmentMatrix::from_bands(&[1], 2).unwrap();
        let mut served = Vec::new();
        for k in 0..8 {
            let r = step(&mut cell, &moved, &mut rng).unwrap();
            if k == 0 {
                assert_eq!((r.handovers, r.interruption_ms), (1, 50.0));
            } else {
                assert_eq!(r.handovers, 0);
            }
            served.push(r.served_bits[0]);
        }
        assert!(served[..5].iter().all(|&s| s == 0.0), "{served:?}");
        assert!(served[5..].iter().sum::<f64>() > 0.0);
        assert_eq!(cell.ues[0].current_band, 1);
    }
}
