//! Large-scale placement and the per-step CQI process.
//!
//! Each (UE, band) pair gets a mean SINR from distance path loss, a band
//! offset and lognormal shadowing. Its base CQI comes from that mean. The
//! realized CQI then performs a lazy random walk inside
//! `[base - span, base + span]`, clipped to the CQI table. A move that would
//! leave the window is dropped. This makes the transition matrix symmetric
//! and doubly stochastic, so the walk is stationary under the uniform
//! distribution on its window.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::BandConfig;
use crate::model::{cqi_rate, Band, RateMatrix, CQI_MAX, CQI_MIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Inter-site distance; UEs fall within `isd_m / sqrt(3)` of the site.
    pub isd_m: f64,
    pub min_distance_m: f64,
    /// Mean SINR at `ref_distance_m` before shadowing.
    pub sinr_ref_db: f64,
    pub ref_distance_m: f64,
    pub pathloss_exponent: f64,
    pub shadowing_db: f64,
    /// Correlation of shadowing across bands of one UE.
    pub shadowing_correlation: f64,
    /// Half-width of the CQI walk window.
    pub cqi_span: u8,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            isd_m: 200.0,
            min_distance_m: 10.0,
            sinr_ref_db: 35.0,
            ref_distance_m: 10.0,
            pathloss_exponent: 3.0,
            shadowing_db: 8.0,
            shadowing_correlation: 0.5,
            cqi_span: 2,
        }
    }
}

impl ChannelConfig {
    pub(crate) fn validate(&self) -> Result<(), String> {
        let radius = self.isd_m / 3f64.sqrt();
        if !(self.min_distance_m > 0.0 && self.min_distance_m < radius) {
            return Err(format!(
                "channel.min_distance_m = {} must lie in (0, isd_m / sqrt 3 = {radius})",
                self.min_distance_m
            ));
        }
        if !(self.ref_distance_m > 0.0) {
            return Err("channel.ref_distance_m must be positive".into());
        }
        if !(self.pathloss_exponent > 0.0) || !self.sinr_ref_db.is_finite() {
            return Err("channel path loss parameters must be finite and positive".into());
        }
        if !(self.shadowing_db >= 0.0) {
            return Err("channel.shadowing_db must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.shadowing_correlation) {
            return Err("channel.shadowing_correlation must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Highest CQI whose SINR threshold is met. CQI `k` needs
/// `-6 + 2 (k - 1)` dB; anything below the first threshold still gets CQI 1.
pub fn cqi_from_sinr(sinr_db: f64) -> u8 {
    let k = ((sinr_db + 6.0) / 2.0).floor() + 1.0;
    k.clamp(CQI_MIN as f64, CQI_MAX as f64) as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    n_bands: usize,
    mean_sinr_db: Vec<f64>,
    lo: Vec<u8>,
    hi: Vec<u8>,
    cqi: Vec<u8>,
    span: u8,
}

impl ChannelState {
    /// Channel with the given mean SINR rows (dB), CQIs drawn from the
    /// stationary distribution.
    pub fn from_mean_sinr<R: Rng + ?Sized>(rows: &[Vec<f64>], span: u8, rng: &mut R) -> Self {
        let n_bands = rows.first().map_or(0, Vec::len);
        let mut s = Self {
            n_bands,
            mean_sinr_db: Vec::with_capacity(rows.len() * n_bands),
            lo: Vec::new(),
            hi: Vec::new(),
            cqi: Vec::new(),
            span,
        };
        for row in rows {
            assert_eq!(row.len(), n_bands, "ragged SINR rows");
            s.mean_sinr_db.extend_from_slice(row);
        }
        s.lo = vec![0; s.mean_sinr_db.len()];
        s.hi = vec![0; s.mean_sinr_db.len()];
        s.cqi = vec![0; s.mean_sinr_db.len()];
        for u in 0..rows.len() {
            s.reset_ue(u, rng);
        }
        s
    }

    /// Drops `n_ues` UEs uniformly over the cell area and draws their means.
    pub fn place<R: Rng + ?Sized>(
        cfg: &ChannelConfig,
        bands: &[BandConfig],
        n_ues: usize,
        rng: &mut R,
    ) -> Self {
        let rows: Vec<Vec<f64>> = (0..n_ues)
            .map(|_| draw_mean_sinr(cfg, bands, rng))
            .collect();
        Self::from_mean_sinr(&rows, cfg.cqi_span, rng)
    }

    /// Replaces UE `u` by a fresh arrival.
    pub fn replace_ue<R: Rng + ?Sized>(
        &mut self,
        u: usize,
        cfg: &ChannelConfig,
        bands: &[BandConfig],
        rng: &mut R,
    ) {
        let row = draw_mean_sinr(cfg, bands, rng);
        let nb = self.n_bands;
        self.mean_sinr_db[u * nb..(u + 1) * nb].copy_from_slice(&row);
        self.reset_ue(u, rng);
    }

    fn reset_ue<R: Rng + ?Sized>(&mut self, u: usize, rng: &mut R) {
        for b in 0..self.n_bands {
            let i = u * self.n_bands + b;
            let base = cqi_from_sinr(self.mean_sinr_db[i]);
            self.lo[i] = base.saturating_sub(self.span).max(CQI_MIN);
            self.hi[i] = base.saturating_add(self.span).min(CQI_MAX);
            self.cqi[i] = rng.random_range(self.lo[i]..=self.hi[i]);
        }
    }

    pub fn n_ues(&self) -> usize {
        self.mean_sinr_db
            .len()
            .checked_div(self.n_bands)
            .unwrap_or(0)
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn cqi(&self, ue: usize, band: usize) -> u8 {
        self.cqi[ue * self.n_bands + band]
    }

    /// Inclusive CQI range the walk of `(ue, band)` moves in.
    pub fn window(&self, ue: usize, band: usize) -> (u8, u8) {
        let i = ue * self.n_bands + band;
        (self.lo[i], self.hi[i])
    }

    /// Mean SINR per band in dB, the quality measure the policies see.
    pub fn quality(&self, ue: usize) -> Vec<f64> {
        self.mean_sinr_db[ue * self.n_bands..(ue + 1) * self.n_bands].to_vec()
    }

    /// One walk step for every (UE, band) pair.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for i in 0..self.cqi.len() {
            let r: f64 = rng.random();
            if r < 0.25 {
                if self.cqi[i] > self.lo[i] {
                    self.cqi[i] -= 1;
                }
            } else if r < 0.5 && self.cqi[i] < self.hi[i] {
                self.cqi[i] += 1;
            }
        }
    }
}

fn draw_mean_sinr<R: Rng + ?Sized>(
    cfg: &ChannelConfig,
    bands: &[BandConfig],
    rng: &mut R,
) -> Vec<f64> {
    let radius = cfg.isd_m / 3f64.sqrt();
    let d2 = rng.random_range(cfg.min_distance_m.powi(2)..radius.powi(2));
    let d = d2.sqrt();
    let mean = cfg.sinr_ref_db - 10.0 * cfg.pathloss_exponent * (d / cfg.ref_distance_m).log10();
    let rho = cfg.shadowing_correlation;
    let common_sd = cfg.shadowing_db * rho.sqrt();
    let own_sd = cfg.shadowing_db * (1.0 - rho).sqrt();
    let gauss = |rng: &mut R, sd: f64| {
        if sd > 0.0 {
            Normal::new(0.0, sd).expect("finite sd").sample(rng)
        } else {
            0.0
        }
    };
    let common = gauss(rng, common_sd);
    bands
        .iter()
        .map(|b| mean + b.sinr_offset_db + common + gauss(rng, own_sd))
        .collect()
}

/// Advances the CQI walk one step and returns the resulting rates.
pub fn realize_rates<R: Rng + ?Sized>(
    channel: &mut ChannelState,
    bands: &[Band],
    rng: &mut R,
) -> RateMatrix {
    assert_eq!(
        bands.len(),
        channel.n_bands,
        "band list does not match channel"
    );
    channel.advance(rng);
    let nb = channel.n_bands;
    let rates = channel
        .cqi
        .iter()
        .enumerate()
        .map(|(i, &c)| cqi_rate(c, bands[i % nb].bandwidth_hz))
        .collect();
    RateMatrix::from_flat(channel.n_ues(), nb, rates).expect("CQI rates are positive")
}
