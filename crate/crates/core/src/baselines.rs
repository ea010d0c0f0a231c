//! Reference schedulers: least laxity first, earliest deadline first,
//! round-robin and uncontrolled charging, plus the minimum-rate fallback
//! used when not every EV can receive its minimum pilot.

use serde::{Deserialize, Serialize};

use crate::infra::{ChargingNetwork, RateSet};
use crate::scheduler::{upper_bound, ControlOptions, EvState};
use crate::FEASIBILITY_TOL;

/// Rate increment per round-robin visit for interval rate sets, in amps.
pub const RR_STEP: f64 = 1.0;

/// Bisection stops once the bracket is narrower than this, in amps.
const BISECTION_RESOLUTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Llf,
    Edf,
    RoundRobin,
    Uncontrolled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortKey {
    Laxity,
    Deadline,
    Arrival,
}

impl Baseline {
    pub fn sort_key(self) -> SortKey {
        match self {
            Baseline::Llf => SortKey::Laxity,
            Baseline::Edf => SortKey::Deadline,
            Baseline::RoundRobin | Baseline::Uncontrolled => SortKey::Arrival,
        }
    }
}

/// Indices into `evs`, highest priority first. Ties go to the earlier
/// arrival, then to the smaller session id.
pub fn priority_order(
    evs: &[&EvState],
    network: &ChargingNetwork,
    k: usize,
    key: SortKey,
) -> Vec<usize> {
    let value = |ev: &EvState| match key {
        SortKey::Laxity => ev.laxity(k, network),
        SortKey::Deadline => ev.departure as f64,
        SortKey::Arrival => ev.arrival as f64,
    };
    let keys: Vec<f64> = evs.iter().map(|ev| value(ev)).collect();
    let mut order: Vec<usize> = (0..evs.len()).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .total_cmp(&keys[b])
            .then(evs[a].arrival.cmp(&evs[b].arrival))
            .then_with(|| evs[a].session_id.cmp(&evs[b].session_id))
    });
    order
}

/// Pilots for the active EVs `evs` at period `k`, one per entry.
pub fn schedule(
    kind: Baseline,
    evs: &[&EvState],
    network: &ChargingNetwork,
    k: usize,
    control: &ControlOptions,
) -> Vec<f64> {
    if kind == Baseline::Uncontrolled {
        return uncontrolled(evs, network);
    }
    let order = priority_order(evs, network, k, kind.sort_key());
    if control.quantized && !minimum_rates_feasible(evs, network, k, control) {
        return minimum_rate_fallback(evs, &order, network, k, control);
    }
    match kind {
        Baseline::RoundRobin => round_robin(evs, &order, network, k, control),
        _ => greedy(evs, &order, network, k, control),
    }
}

pub fn llf(
    evs: &[&EvState],
    network: &ChargingNetwork,
    k: usize,
    control: &ControlOptions,
) -> Vec<f64> {
    schedule(Baseline::Llf, evs, network, k, control)
}

pub fn edf(
    evs: &[&EvState],
    network: &ChargingNetwork,
    k: usize,
    control: &ControlOptions,
) -> Vec<f64> {
    schedule(Baseline::Edf, evs, network, k, control)
}

pub fn rr(
    evs: &[&EvState],
    network: &ChargingNetwork,
    k: usize,
    control: &ControlOptions,
) -> Vec<f64> {
    schedule(Baseline::RoundRobin, evs, network, k, control)
}

/// Every EV at its maximum pilot, ignoring the network.
pub fn uncontrolled(evs: &[&EvState], network: &ChargingNetwork) -> Vec<f64> {
    evs.iter()
        .map(|ev| network.evses[ev.evse_index].max_pilot)
        .collect()
}

/// Highest useful pilot: the rate bound, further limited to what finishes the
/// remaining energy this period (rounded up into the rate set).
fn useful_cap(ev: &EvState, set: &RateSet, network: &ChargingNetwork) -> f64 {
    let ub = set.floor(upper_bound(ev, network));
    match set.ceil(ev.remaining_energy) {
        Some(c) => c.min(ub),
        None => ub,
    }
}

/// Checks partial allocations against the network at one period.
struct Allocation<'a> {
    evs: &'a [&'a EvState],
    network: &'a ChargingNetwork,
    k: usize,
    control: ControlOptions,
    full: Vec<f64>,
    pilots: Vec<f64>,
}

impl<'a> Allocation<'a> {
    fn new(
        evs: &'a [&'a EvState],
        network: &'a ChargingNetwork,
        k: usize,
        control: &ControlOptions,
    ) -> Self {
        Allocation {
            evs,
            network,
            k,
            control: *control,
            full: vec![0.0; network.evses.len()],
            pilots: vec![0.0; evs.len()],
        }
    }

    fn feasible_with(&mut self, i: usize, rate: f64) -> bool {
        let slot = self.evs[i].evse_index;
        let old = self.full[slot];
        self.full[slot] = rate;
        let ok = self.network.is_feasible(
            &self.full,
            self.k,
            FEASIBILITY_TOL,
            self.control.constraint_mode,
        );
        self.full[slot] = old;
        ok
    }

    fn set(&mut self, i: usize, rate: f64) {
        self.pilots[i] = rate;
        self.full[self.evs[i].evse_index] = rate;
    }

    /// In quantized mode every EV first holds its minimum pilot, so that later
    /// increases never crowd anyone below it.
    fn reserve_minimums(&mut self, sets: &[RateSet]) {
        if !self.control.quantized {
            return;
        }
        for i in 0..self.evs.len() {
            let m = sets[i].min_nonzero();
            if m > 0.0 && m <= upper_bound(self.evs[i], self.network) {
                self.set(i, m);
            }
        }
    }

    /// Largest allowed rate in `[0, cap]` for EV `i` keeping the allocation
    /// feasible; never below the pilot it already holds.
    fn max_feasible(&mut self, i: usize, set: &RateSet, cap: f64) -> f64 {
        let held = self.pilots[i];
        if cap <= held {
            return held;
        }
        match set {
            RateSet::Discrete(_) => set
                .values_desc(cap)
                .into_iter()
                .find(|&v| v <= held || self.feasible_with(i, v))
                .unwrap_or(0.0)
                .max(held),
            RateSet::Interval { min_nonzero, .. } => {
                if cap <= 0.0 {
                    return 0.0;
                }
                if self.feasible_with(i, cap) {
                    return cap;
                }
                let lo_start = min_nonzero.max(held);
                if lo_start > held && !self.feasible_with(i, lo_start) {
                    return held;
                }
                let (mut lo, mut hi) = (lo_start, cap);
                while hi - lo > BISECTION_RESOLUTION {
                    let mid = 0.5 * (lo + hi);
                    if self.feasible_with(i, mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if lo <= held + BISECTION_RESOLUTION {
                    held
                } else {
                    lo
                }
            }
        }
    }
}

/// Serve EVs in `order`, each at the largest rate that keeps the partial
/// allocation feasible.
fn greedy(
    evs: &[&EvState],
    order: &[usize],
    network: &ChargingNetwork,
    k: usize,
    control: &ControlOptions,
) -> Vec<f64> {
    let mut alloc = Allocation::new(evs, network, k, control);
    let sets: Vec<RateSet> = evs
        .iter()
        .map(|ev| control.rate_set(network, ev.evse_index))
        .collect();
    alloc.reserve_minimums(&sets);
    for &i in order {
        let cap = useful_cap(evs[i], &sets[i], network);
        let rate = alloc.max_feasible(i, &sets[i], cap);
        alloc.set(i, rate);
    }
    alloc.pilots
}

fn round_robin(
    evs: &[&EvState],
    order: &[usize],
    network: &ChargingNetwork,
    k: usize,
    control: &ControlOptions,
) -> Vec<f64> {
    let mut alloc = Allocation::new(evs, network, k, control);
    let sets: Vec<RateSet> = evs
        .iter()
        .map(|ev| control.rate_set(network, ev.evse_index))
        .collect();
    let caps: Vec<f64> = evs
        .iter()
        .zip(&sets)
        .map(|(ev, s)| useful_cap(ev, s, network))
        .collect();
    alloc.reserve_minimums(&sets);
    let mut blocked = vec![false; evs.len()];
    loop {
        let mut raised = false;
        for &i in order {
            if blocked[i] {
                continue;
            }
            let next = sets[i]
                .next_above(alloc.pilots[i], RR_STEP)
                .map(|v| v.min(caps[i]));
            match next {
                Some(v) if v > alloc.pilots[i] + 1e-12 && alloc.feasible_with(i, v) => {
                    alloc.set(i, v);
                    raised = true;
                }
                _ => blocked[i] = true,
            }
        }
        if !raised {
            break;
        }
    }
    alloc.pilots
}

/// Whether every EV in `evs` can receive its minimum nonzero pilot at once.
pub fn minimum_rates_feasible(
    evs: &[&EvState],
    network: &ChargingNetwork,
    k: usize,
    control: &ControlOptions,
) -> bool {
    let mut full = vec![0.0; network.evses.len()];
    for ev in evs {
        let m = control.rate_set(network, ev.evse_index).min_nonzero();
        if m <= upper_bound(ev, network) {
            full[ev.evse_index] = m;
        }
    }
    network.is_feasible(&full, k, FEASIBILITY_TOL, control.constraint_mode)
}

/// Give the minimum nonzero pilot to as many EVs as possible, in `order`.
pub fn minimum_rate_fallback(
    evs: &[&EvState],
    order: &[usize],
    network: &ChargingNetwork,
    k: usize,
    control: &ControlOptions,
) -> Vec<f64> {
    let mut alloc = Allocation::new(evs, network, k, control);
    for &i in order {
        let set = control.rate_set(network, evs[i].evse_index);
        let m = set.min_nonzero();
        let m = if m > 0.0 {
            m
        } else {
            useful_cap(evs[i], &set, network).min(RR_STEP)
        };
        if m > 0.0 && m <= upper_bound(evs[i], network) && alloc.feasible_with(i, m) {
            alloc.set(i, m);
        }
    }
    alloc.pilots
}

impl std::fmt::Display for Baseline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Baseline::Llf => "llf",
            Baseline::Edf => "edf",
            Baseline::RoundRobin => "rr",
            Baseline::Uncontrolled => "uncontrolled",
        })
    }
}
