//! Test-side oracles shared by the integration suites.

#![allow(dead_code)]

use pmlb_core::balancer::AssignmentProblem;

/// Exhaustive minimum of the scalarized objective over all `B^U` hard
/// assignments that meet the rate floor and the caps. Recomputes both
/// objectives from the raw loads instead of calling the library.
pub fn brute_force(p: &AssignmentProblem) -> Option<(f64, Vec<usize>)> {
    let (nu, nb) = (p.n_ues(), p.n_bands());
    let prev: Vec<usize> = (0..nu)
        .map(|u| (0..nb).find(|&b| p.previous.get(u, b) == 1.0).unwrap())
        .collect();
    let (t_max, y_max) = (p.t_max(), p.y_max());
    let mut bands = vec![0usize; nu];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut counts = vec![0usize; nb];
        let mut totals = p.loads.incurred_loads.clone();
        let mut ok = true;
        for (u, &b) in bands.iter().enumerate() {
            if p.rates.get(u, b) < p.r_min {
                ok = false;
                break;
            }
            counts[b] += 1;
            totals[b] += p.loads.load(u, b);
        }
        if ok && counts.iter().zip(&p.caps).all(|(c, cap)| c <= cap) {
            let f1 = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let moved = bands.iter().zip(&prev).filter(|(a, b)| a != b).count();
            let v = p.w * f1 / t_max + (1.0 - p.w) * (2 * moved) as f64 / y_max;
            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                best = Some((v, bands.clone()));
            }
        }
        // Next assignment in base-B counting order.
        let mut i = 0;
        loop {
            if i == nu {
                return best;
            }
            bands[i] += 1;
            if bands[i] < nb {
                break;
            }
            bands[i] = 0;
            i += 1;
        }
    }
}
