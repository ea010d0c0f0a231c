//! Rounding continuous rates onto the EVSEs' allowed pilot sets.

use crate::infra::RateSet;

/// Step used to walk interval rate sets during reclamation, in amps.
pub const INTERVAL_STEP: f64 = 1.0;

/// Round `r_star` down into each EVSE's rate set, then greedily give back
/// capacity lost to rounding.
///
/// Each pass visits EVs in descending order of `r*_i − pilot_i` and raises a
/// pilot to its next allowed value when the result stays `feasible`, stays
/// within `caps[i]`, and keeps `Σ pilots ≤ Σ r*`. Passes repeat until one
/// makes no change.
///
/// If the rounded-down point itself is infeasible (possible when phasors
/// interfere destructively), the largest pilots are lowered one step at a
/// time until it is.
pub fn quantize_and_reclaim(
    r_star: &[f64],
    caps: &[f64],
    rate_sets: &[RateSet],
    mut feasible: impl FnMut(&[f64]) -> bool,
) -> Vec<f64> {
    let n = r_star.len();
    let mut pilots: Vec<f64> = (0..n)
        .map(|i| rate_sets[i].floor(r_star[i].min(caps[i])))
        .collect();

    while !feasible(&pilots) {
        let Some(i) = (0..n)
            .filter(|&i| pilots[i] > 0.0)
            .max_by(|&a, &b| pilots[a].total_cmp(&pilots[b]).then(b.cmp(&a)))
        else {
            break;
        };
        let step = if rate_sets[i].is_continuous() {
            INTERVAL_STEP
        } else {
            1e-6
        };
        pilots[i] = rate_sets[i].floor(pilots[i] - step);
    }

    let budget: f64 = r_star.iter().sum::<f64>() + 1e-9;
    let mut total: f64 = pilots.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    loop {
        order.sort_by(|&a, &b| {
            (r_star[b] - pilots[b])
                .total_cmp(&(r_star[a] - pilots[a]))
                .then(a.cmp(&b))
        });
        let mut changed = false;
        for &i in &order {
            let Some(next) = rate_sets[i].next_above(pilots[i], INTERVAL_STEP) else {
                continue;
            };
            if next > caps[i] + 1e-9 || total - pilots[i] + next > budget {
                continue;
            }
            let old = pilots[i];
            pilots[i] = next;
            if feasible(&pilots) {
                total += next - old;
                changed = true;
            } else {
                pilots[i] = old;
            }
        }
        if !changed {
            break;
        }
    }
    pilots
}
