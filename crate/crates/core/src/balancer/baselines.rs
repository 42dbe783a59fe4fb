//! Comparison policies: no balancing, A2-triggered moves, and a load-gap rule.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{argmax, AssignmentMatrix, LoadSample, UeState};

/// Camp every UE on the better of bands 0 and 1 by channel quality.
pub fn baseline_no_mlb(ues: &[UeState]) -> AssignmentMatrix {
    let nb = ues.first().map_or(1, |u| u.channel_quality.len());
    let bands: Vec<usize> = ues
        .iter()
        .map(|ue| argmax(&ue.channel_quality[..nb.min(2)]))
        .collect();
    AssignmentMatrix::from_bands(&bands, nb).expect("argmax is within the band range")
}

/// UEs whose serving quality falls below `a2_threshold` (dB) move to their
/// best other band; everyone else stays.
pub fn baseline_a2_mlb(
    ues: &[UeState],
    previous: &AssignmentMatrix,
    a2_threshold: f64,
) -> AssignmentMatrix {
    let nb = previous.n_bands();
    let bands: Vec<usize> = ues
        .iter()
        .enumerate()
        .map(|(u, ue)| {
            let serving = previous.band_of(u);
            if nb < 2 || !(ue.channel_quality[serving] < a2_threshold) {
                return serving;
            }
            (0..nb)
                .filter(|&b| b != serving)
                .fold(None::<usize>, |best, b| match best {
                    Some(a) if ue.channel_quality[a] >= ue.channel_quality[b] => Some(a),
                    _ => Some(b),
                })
                .unwrap_or(serving)
        })
        .collect();
    AssignmentMatrix::from_bands(&bands, nb).expect("bands come from the previous assignment")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuleBasedParams {
    /// Band load spread (max - min) that triggers a move.
    pub gap: f64,
    /// UEs drawn from the most loaded band per trigger; `None` means
    /// `ceil(0.05 U)`.
    pub pool_size: Option<usize>,
    /// Minimum target-band quality in dB for a move.
    pub q_min: f64,
}

impl Default for RuleBasedParams {
    fn default() -> Self {
        Self {
            gap: 0.2,
            pool_size: None,
            q_min: -12.0,
        }
    }
}

impl RuleBasedParams {
    pub fn pool_for(&self, n_ues: usize) -> usize {
        self.pool_size
            .unwrap_or_else(|| (0.05 * n_ues as f64).ceil() as usize)
    }
}

/// When the band load spread exceeds `params.gap`, a random pool of UEs on
/// the most loaded band moves, each to the currently least loaded band whose
/// quality for it exceeds `params.q_min`. Band totals are updated after every
/// move.
pub fn baseline_rule_based<R: Rng + ?Sized>(
    ues: &[UeState],
    loads: &LoadSample,
    previous: &AssignmentMatrix,
    rng: &mut R,
    params: &RuleBasedParams,
) -> AssignmentMatrix {
    let nb = previous.n_bands();
    let mut bands = previous.bands();
    let Ok(mut totals) = loads.band_totals(previous) else {
        return previous.clone();
    };
    let spread = |t: &[f64]| {
        t.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - t.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let pool = params.pool_for(ues.len());
    if nb < 2 || pool == 0 || !(spread(&totals) > params.gap) {
        return previous.clone();
    }
    let source = argmax(&totals);
    let on_source: Vec<usize> = (0..bands.len()).filter(|&u| bands[u] == source).collect();
    let picked = sample(rng, on_source.len(), pool.min(on_source.len()));
    for i in picked.iter() {
        let u = on_source[i];
        let target = (0..nb)
            .filter(|&b| b != source && ues[u].channel_quality[b] > params.q_min)
            .min_by(|&a, &b| totals[a].total_cmp(&totals[b]).then(a.cmp(&b)));
        if let Some(t) = target {
            totals[source] -= loads.load(u, source);
            totals[t] += loads.load(u, t);
            bands[u] = t;
        }
    }
    AssignmentMatrix::from_bands(&bands, nb).expect("targets are band indices")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ue(id: usize, q: Vec<f64>) -> UeState {
        UeState::new(id, 50.0, 12_000.0, q, 0).unwrap()
    }

    #[test]
    fn no_mlb_uses_first_two_bands() {
        let ues = vec![
            ue(0, vec![10.0, 3.0, 99.0, 99.0]),
            ue(1, vec![1.0, 4.0, 0.0, 9.0]),
        ];
        let a = baseline_no_mlb(&ues);
        assert_eq!(a.bands(), vec![0, 1]);
        assert_eq!(a.column(2), vec![0.0, 0.0]);
        assert_eq!(a.column(3), vec![0.0, 0.0]);
        assert_eq!(baseline_no_mlb(&ues), a);
    }

    #[test]
    fn a2_moves_only_weak_ues() {
        let ues = vec![ue(0, vec![5.0, 0.0, 2.0]), ue(1, vec![-15.0, 1.0, 3.0])];
        let prev = AssignmentMatrix::from_bands(&[0, 0], 3).unwrap();
        assert_eq!(baseline_a2_mlb(&ues, &prev, -20.0), prev);
        assert_eq!(baseline_a2_mlb(&ues, &prev, f64::NEG_INFINITY), prev);
        assert_eq!(baseline_a2_mlb(&ues, &prev, -10.0).bands(), vec![0, 2]);
    }

    #[test]
    fn rule_based_gating_and_determinism() {
        let ues: Vec<UeState> = (0..20).map(|i| ue(i, vec![0.0; 3])).collect();
        let prev = AssignmentMatrix::from_bands(&vec![0; 20], 3).unwrap();
        let busy = LoadSample::from_ue_rows(&vec![vec![0.05, 0.1, 0.1]; 20], 0.0).unwrap();
        let params = RuleBasedParams::default();

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let moved = baseline_rule_based(&ues, &busy, &prev, &mut rng, &params);
        assert_eq!(20 - moved.column(0).iter().sum::<f64>() as usize, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(
            baseline_rule_based(&ues, &busy, &prev, &mut rng, &params),
            moved
        );

        let none = RuleBasedParams {
            pool_size: Some(0),
            ..params
        };
        assert_eq!(
            baseline_rule_based(&ues, &busy, &prev, &mut rng, &none),
            prev
        );

        let even =
            AssignmentMatrix::from_bands(&(0..20).map(|u| u % 3).collect::<Vec<_>>(), 3).unwrap();
        let flat = LoadSample::from_ue_rows(&vec![vec![0.05; 3]; 20], 0.0).unwrap();
        assert_eq!(
            baseline_rule_based(&ues, &flat, &even, &mut rng, &params),
            even
        );
    }
}
