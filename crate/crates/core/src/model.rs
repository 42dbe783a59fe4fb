//! Core domain types and the load/objective/fairness arithmetic.
//!
//! Everything here is a pure function of its inputs (plus an explicit RNG
//! where sampling is involved). Matrices are stored row-major with one row
//! per UE and one column per band.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking that assignment rows sum to one.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid channel state: rate at index {index} is {rate} (must be > 0)")]
    NonPositiveRate { index: usize, rate: f64 },
    #[error("row {row} sums to {sum}, expected 1")]
    NotRowStochastic { row: usize, sum: f64 },
    #[error("entry ({row}, {col}) = {value} is not binary in a hard assignment")]
    NotBinary { row: usize, col: usize, value: f64 },
    #[error("entry ({row}, {col}) = {value} outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("band {index} out of range for {n_bands} bands")]
    BandOutOfRange { index: usize, n_bands: usize },
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;

fn invalid(what: &'static str, detail: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        what,
        detail: detail.into(),
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(ModelError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// A carrier within a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub id: usize,
    pub bandwidth_hz: f64,
    /// Physical resource blocks available on the band.
    pub n_prb: u32,
    /// Maximum number of UEs the band admits.
    pub ue_cap: usize,
}

impl Band {
    pub fn new(id: usize, bandwidth_hz: f64, n_prb: u32, ue_cap: usize) -> Result<Self> {
        if !(bandwidth_hz > 0.0) || !bandwidth_hz.is_finite() {
            return Err(invalid(
                "band",
                format!("bandwidth_hz must be > 0, got {bandwidth_hz}"),
            ));
        }
        if n_prb == 0 {
            return Err(invalid("band", "n_prb must be >= 1"));
        }
        if ue_cap == 0 {
            return Err(invalid("band", "ue_cap must be >= 1"));
        }
        Ok(Self {
            id,
            bandwidth_hz,
            n_prb,
            ue_cap,
        })
    }
}

/// Per-band UE caps proportional to band resources:
/// `ceil(beta * n_ues * n_prb_b / sum(n_prb))`, floored at one.
pub fn proportional_caps(n_prbs: &[u32], n_ues: usize, beta: f64) -> Vec<usize> {
    let total: f64 = n_prbs.iter().map(|&n| n as f64).sum();
    n_prbs
        .iter()
        .map(|&n| {
            let cap = (beta * n_ues as f64 * n as f64 / total - 1e-9).ceil();
            (cap.max(1.0)) as usize
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeState {
    pub id: usize,
    /// Packets per second.
    pub mean_arrival_rate: f64,
    pub packet_size_bits: f64,
    /// Per-band quality in dB (RSRQ proxy). Exactly one entry per band.
    pub channel_quality: Vec<f64>,
    pub current_band: usize,
    pub backlog_bits: f64,
}

impl UeState {
    pub fn new(
        id: usize,
        mean_arrival_rate: f64,
        packet_size_bits: f64,
        channel_quality: Vec<f64>,
        current_band: usize,
    ) -> Result<Self> {
        if !(mean_arrival_rate >= 0.0) {
            return Err(invalid(
                "ue",
                format!("mean_arrival_rate {mean_arrival_rate} < 0"),
            ));
        }
        if !(packet_size_bits > 0.0) {
            return Err(invalid(
                "ue",
                format!("packet_size_bits {packet_size_bits} <= 0"),
            ));
        }
        if current_band >= channel_quality.len() {
            return Err(ModelError::BandOutOfRange {
                index: current_band,
                n_bands: channel_quality.len(),
            });
        }
        Ok(Self {
            id,
            mean_arrival_rate,
            packet_size_bits,
            channel_quality,
            current_band,
            backlog_bits: 0.0,
        })
    }

    /// Band with the best quality; ties go to the lowest index.
    pub fn best_band(&self) -> usize {
        argmax(&self.channel_quality)
    }
}

/// Index of the largest entry, first occurrence on ties. Panics on empty input.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Spectral efficiency in bits/s/Hz for CQI indices 1..=15 (standard LTE
/// 4-bit CQI table).
pub const CQI_EFFICIENCY: [f64; 15] = [
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223, 3.9023,
    4.5234, 5.1152, 5.5547,
];

pub const CQI_MIN: u8 = 1;
pub const CQI_MAX: u8 = 15;

/// Rate in bits/s for a CQI index on a band of the given width.
pub fn cqi_rate(cqi: u8, bandwidth_hz: f64) -> f64 {
    assert!(
        (CQI_MIN..=CQI_MAX).contains(&cqi),
        "CQI {cqi} outside 1..=15"
    );
    CQI_EFFICIENCY[(cqi - 1) as usize] * bandwidth_hz
}

/// U x B matrix of achievable rates in bits per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMatrix {
    n_ues: usize,
    n_bands: usize,
    rates: Vec<f64>,
}

impl RateMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_bands = rows.first().map_or(0, Vec::len);
        let n_ues = rows.len();
        let mut rates = Vec::with_capacity(n_ues * n_bands);
        for row in rows {
            check_len(n_bands, row.len())?;
            rates.extend(row);
        }
        Self::from_flat(n_ues, n_bands, rates)
    }

    pub fn from_flat(n_ues: usize, n_bands: usize, rates: Vec<f64>) -> Result<Self> {
        check_len(n_ues * n_bands, rates.len())?;
        if let Some((index, &rate)) = rates
            .iter()
            .enumerate()
            .find(|(_, r)| !(**r > 0.0) || !r.is_finite())
        {
            return Err(ModelError::NonPositiveRate { index, rate });
        }
        Ok(Self {
            n_ues,
            n_bands,
            rates,
        })
    }

    pub fn n_ues(&self) -> usize {
        self.n_ues
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn get(&self, ue: usize, band: usize) -> f64 {
        self.rates[ue * self.n_bands + band]
    }

    /// Rates of one UE across all bands.
    pub fn row(&self, ue: usize) -> &[f64] {
        &self.rates[ue * self.n_bands..(ue + 1) * self.n_bands]
    }

    /// Rates of every UE on one band.
    pub fn column(&self, band: usize) -> Vec<f64> {
        (0..self.n_ues).map(|u| self.get(u, band)).collect()
    }

    /// Keep only the listed UEs, in the given order.
    pub fn select_rows(&self, ues: &[usize]) -> Self {
        let mut rates = Vec::with_capacity(ues.len() * self.n_bands);
        for &u in ues {
            rates.extend_from_slice(self.row(u));
        }
        Self {
            n_ues: ues.len(),
            n_bands: self.n_bands,
            rates,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    Hard,
    Stochastic,
}

/// U x B UE-to-band assignment. Hard rows are one-hot; stochastic rows are
/// probability distributions over bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    n_ues: usize,
    n_bands: usize,
    entries: Vec<f64>,
    mode: AssignmentMode,
}

impl AssignmentMatrix {
    /// Hard assignment from a band index per UE.
    pub fn from_bands(bands: &[usize], n_bands: usize) -> Result<Self> {
        let mut entries = vec![0.0; bands.len() * n_bands];
        for (u, &b) in bands.iter().enumerate() {
            if b >= n_bands {
                return Err(ModelError::BandOutOfRange { index: b, n_bands });
            }
            entries[u * n_bands + b] = 1.0;
        }
        Ok(Self {
            n_ues: bands.len(),
            n_bands,
            entries,
            mode: AssignmentMode::Hard,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, mode: AssignmentMode) -> Result<Self> {
        let n_bands = rows.first().map_or(0, Vec::len);
        let n_ues = rows.len();
        let mut entries = Vec::with_capacity(n_ues * n_bands);
        for row in rows {
            check_len(n_bands, row.len())?;
            entries.extend(row);
        }
        Self::from_flat(n_ues, n_bands, entries, mode)
    }

    pub fn from_flat(
        n_ues: usize,
        n_bands: usize,
        entries: Vec<f64>,
        mode: AssignmentMode,
    ) -> Result<Self> {
        check_len(n_ues * n_bands, entries.len())?;
        let m = Self {
            n_ues,
            n_bands,
            entries,
            mode,
        };
        m.validate()?;
        Ok(m)
    }

    /// Normalize rows that are stochastic up to solver round-off: clamp to
    /// [0, 1] and rescale each row to sum to one.
    pub fn stochastic_from_relaxed(
        n_ues: usize,
        n_bands: usize,
        mut entries: Vec<f64>,
    ) -> Result<Self> {
        check_len(n_ues * n_bands, entries.len())?;
        for u in 0..n_ues {
            let row = &mut entries[u * n_bands..(u + 1) * n_bands];
            for v in row.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
            let sum: f64 = row.iter().sum();
            if !(sum > 0.5) {
                return Err(ModelError::NotRowStochastic { row: u, sum });
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Self::from_flat(n_ues, n_bands, entries, AssignmentMode::Stochastic)
    }

    fn validate(&self) -> Result<()> {
        for u in 0..self.n_ues {
            let row = self.row(u);
            for (b, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ModelError::OutOfRange {
                        row: u,
                        col: b,
                        value: v,
                    });
                }
                if self.mode == AssignmentMode::Hard && v != 0.0 && v != 1.0 {
                    return Err(ModelError::NotBinary {
                        row: u,
                        col: b,
                        value: v,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ModelError::NotRowStochastic { row: u, sum });
            }
        }
        Ok(())
    }

    pub fn n_ues(&self) -> usize {
        self.n_ues
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn mode(&self) -> AssignmentMode {
        self.mode
    }

    pub fn is_hard(&self) -> bool {
        self.mode == AssignmentMode::Hard
    }

    pub fn get(&self, ue: usize, band: usize) -> f64 {
        self.entries[ue * self.n_bands + band]
    }

    pub fn row(&self, ue: usize) -> &[f64] {
        &self.entries[ue * self.n_bands..(ue + 1) * self.n_bands]
    }

    pub fn column(&self, band: usize) -> Vec<f64> {
        (0..self.n_ues).map(|u| self.get(u, band)).collect()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Band of each UE: the one-hot position for hard rows, the most likely
    /// band for stochastic rows.
    pub fn bands(&self) -> Vec<usize> {
        (0..self.n_ues).map(|u| argmax(self.row(u))).collect()
    }

    pub fn band_of(&self, ue: usize) -> usize {
        argmax(self.row(ue))
    }

    /// Number of UEs on each band (hard) or expected count (stochastic).
    pub fn band_counts(&self) -> Vec<f64> {
        (0..self.n_bands)
            .map(|b| (0..self.n_ues).map(|u| self.get(u, b)).sum())
            .collect()
    }

    pub fn select_rows(&self, ues: &[usize]) -> Self {
        let mut entries = Vec::with_capacity(ues.len() * self.n_bands);
        for &u in ues {
            entries.extend_from_slice(self.row(u));
        }
        Self {
            n_ues: ues.len(),
            n_bands: self.n_bands,
            entries,
            mode: self.mode,
        }
    }
}

/// Per-band per-UE load contributions at one instant, plus load already
/// committed to each band before optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSample {
    /// `per_band_loads[b][u]`: fraction of band `b` time UE `u` would need.
    pub per_band_loads: Vec<Vec<f64>>,
    pub incurred_loads: Vec<f64>,
    pub timestamp: f64,
}

impl LoadSample {
    pub fn new(
        per_band_loads: Vec<Vec<f64>>,
        incurred_loads: Vec<f64>,
        timestamp: f64,
    ) -> Result<Self> {
        check_len(per_band_loads.len(), incurred_loads.len())?;
        let n_ues = per_band_loads.first().map_or(0, Vec::len);
        for col in &per_band_loads {
            check_len(n_ues, col.len())?;
        }
        if per_band_loads
            .iter()
            .flatten()
            .chain(&incurred_loads)
            .any(|&v| !(v >= 0.0))
        {
            return Err(invalid("load sample", "loads must be nonnegative"));
        }
        Ok(Self {
            per_band_loads,
            incurred_loads,
            timestamp,
        })
    }

    /// Sample with no incurred load, from a U x B load matrix.
    pub fn from_ue_rows(rows: &[Vec<f64>], timestamp: f64) -> Result<Self> {
        let n_bands = rows.first().map_or(0, Vec::len);
        let mut per_band = vec![Vec::with_capacity(rows.len()); n_bands];
        for row in rows {
            check_len(n_bands, row.len())?;
            for (b, &v) in row.iter().enumerate() {
                per_band[b].push(v);
            }
        }
        Self::new(per_band, vec![0.0; n_bands], timestamp)
    }

    pub fn n_bands(&self) -> usize {
        self.per_band_loads.len()
    }

    pub fn n_ues(&self) -> usize {
        self.per_band_loads.first().map_or(0, Vec::len)
    }

    pub fn load(&self, ue: usize, band: usize) -> f64 {
        self.per_band_loads[band][ue]
    }

    /// Band totals under `assignment`, including incurred load.
    pub fn band_totals(&self, assignment: &AssignmentMatrix) -> Result<Vec<f64>> {
        check_len(self.n_bands(), assignment.n_bands())?;
        check_len(self.n_ues(), assignment.n_ues())?;
        (0..self.n_bands())
            .map(|b| {
                Ok(band_load(&assignment.column(b), &self.per_band_loads[b])?
                    + self.incurred_loads[b])
            })
            .collect()
    }

    pub fn select_ues(&self, ues: &[usize]) -> Self {
        Self {
            per_band_loads: self
                .per_band_loads
                .iter()
                .map(|col| ues.iter().map(|&u| col[u]).collect())
                .collect(),
            incurred_loads: self.incurred_loads.clone(),
            timestamp: self.timestamp,
        }
    }
}

/// Bits arriving for `ue` over `dt` seconds: Poisson(lambda * dt) packets.
pub fn sample_demand<R: Rng + ?Sized>(ue: &UeState, rng: &mut R, dt: f64) -> f64 {
    debug_assert!(dt > 0.0);
    let mean = ue.mean_arrival_rate * dt;
    if mean <= 0.0 {
        return 0.0;
    }
    let packets: f64 = Poisson::new(mean)
        .expect("finite positive Poisson mean")
        .sample(rng);
    packets * ue.packet_size_bits
}

/// Element-wise `demands / band_rates`.
pub fn load_vector(demands: &[f64], band_rates: &[f64]) -> Result<Vec<f64>> {
    check_len(demands.len(), band_rates.len())?;
    demands
        .iter()
        .zip(band_rates)
        .enumerate()
        .map(|(index, (&d, &r))| {
            if !(r > 0.0) {
                Err(ModelError::NonPositiveRate { index, rate: r })
            } else {
                Ok(d / r)
            }
        })
        .collect()
}

/// Load a band carries from one assignment column.
pub fn band_load(assignment_col: &[f64], loads: &[f64]) -> Result<f64> {
    check_len(assignment_col.len(), loads.len())?;
    Ok(assignment_col.iter().zip(loads).map(|(x, r)| x * r).sum())
}

/// Largest band load, incurred load included.
pub fn objective_f1(assignment: &AssignmentMatrix, loads: &LoadSample) -> Result<f64> {
    let totals = loads.band_totals(assignment)?;
    Ok(totals.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Entry-wise L1 distance between two assignments. For hard assignments this
/// is twice the number of UEs whose band changed.
pub fn objective_f2(assignment: &AssignmentMatrix, previous: &AssignmentMatrix) -> Result<f64> {
    check_len(assignment.n_ues(), previous.n_ues())?;
    check_len(assignment.n_bands(), previous.n_bands())?;
    Ok(assignment
        .entries()
        .iter()
        .zip(previous.entries())
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// Load balancing index: Jain's fairness index over band loads.
/// All-zero input is treated as perfectly balanced.
pub fn lbi(band_total_loads: &[f64]) -> f64 {
    let n = band_total_loads.len();
    let sum: f64 = band_total_loads.iter().sum();
    let sum_sq: f64 = band_total_loads.iter().map(|v| v * v).sum();
    if n == 0 || sum_sq <= 0.0 {
        return 1.0;
    }
    (sum * sum / (n as f64 * sum_sq)).min(1.0)
}
