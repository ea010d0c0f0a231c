//! Adaptive Scheduling Algorithm: a receding-horizon controller that
//! re-solves a concave program over the active EVs whenever an EV arrives or
//! leaves, or a fixed number of periods has passed since the last solve.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::infra::{ChargingNetwork, ConstraintMode};
use crate::solver::{self, SolveOptions, Status};
use crate::workload::Session;
use crate::{Error, Result, FEASIBILITY_TOL};

mod program;
mod quantize;
mod utility;

pub use program::{build_opt, upper_bound, BuildOptions, OptProblem};
pub use quantize::{quantize_and_reclaim, INTERVAL_STEP};
pub use utility::{SignalContext, UtilityComponent, UtilityConfig, WeightedComponent};

/// Remaining energy below this many amp-periods counts as delivered.
pub const ENERGY_EPS: f64 = 1e-6;

/// Scheduler-side view of one plugged-in EV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvState {
    pub session_id: String,
    pub evse_index: usize,
    pub arrival: usize,
    pub departure: usize,
    pub requested_energy: f64,
    /// `e_i(k)` in amp-periods.
    pub remaining_energy: f64,
    /// `r̄_i`, lowered by rampdown; starts at the EVSE maximum.
    pub pilot_upper_bound: f64,
    pub last_pilot: f64,
    pub last_measured: f64,
}

impl EvState {
    pub fn from_session(session: &Session, network: &ChargingNetwork) -> Result<Self> {
        let evse_index = network
            .evse_index(&session.evse_id)
            .ok_or_else(|| Error::UnknownEvse(session.evse_id.clone()))?;
        Ok(EvState {
            session_id: session.id.clone(),
            evse_index,
            arrival: session.arrival,
            departure: session.departure,
            requested_energy: session.requested_energy,
            remaining_energy: session.requested_energy,
            pilot_upper_bound: network.evses[evse_index].max_pilot,
            last_pilot: 0.0,
            last_measured: 0.0,
        })
    }

    /// `d_i(k)`: periods left before departure.
    pub fn remaining_duration(&self, k: usize) -> usize {
        self.departure.saturating_sub(k)
    }

    /// `d_i(k) − e_i(k) / r̄_i` in periods.
    pub fn laxity(&self, k: usize, network: &ChargingNetwork) -> f64 {
        let rate = upper_bound(self, network);
        let needed = if rate > 0.0 {
            self.remaining_energy / rate
        } else {
            f64::INFINITY
        };
        self.remaining_duration(k) as f64 - needed
    }

    /// Record one period's pilot and measured current (amps over one period),
    /// optionally adjusting the pilot bound by rampdown.
    pub fn record(
        &mut self,
        pilot: f64,
        measured: f64,
        rampdown: Option<&RampdownParams>,
        max_pilot: f64,
    ) {
        self.remaining_energy = (self.remaining_energy - measured).max(0.0);
        if let Some(params) = rampdown {
            if pilot > 0.0 {
                self.pilot_upper_bound =
                    rampdown_update(pilot, measured, self.pilot_upper_bound, params, max_pilot);
            }
        }
        self.last_pilot = pilot;
        self.last_measured = measured;
    }
}

/// EVs that still need energy and have not departed.
pub fn active_set(evs: &[EvState], k: usize) -> Vec<usize> {
    (0..evs.len())
        .filter(|&i| evs[i].remaining_energy > ENERGY_EPS && evs[i].remaining_duration(k) > 0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampdownParams {
    pub theta_down: f64,
    pub theta_up: f64,
    pub sigma: f64,
}

impl Default for RampdownParams {
    fn default() -> Self {
        RampdownParams {
            theta_down: 2.0,
            theta_up: 1.0,
            sigma: 1.0,
        }
    }
}

/// New pilot bound after observing `measured` under `pilot`.
pub fn rampdown_update(
    pilot: f64,
    measured: f64,
    bound: f64,
    params: &RampdownParams,
    max_pilot: f64,
) -> f64 {
    if pilot - measured > params.theta_down {
        measured + params.sigma
    } else if bound - measured < params.theta_up {
        (bound + params.sigma).min(max_pilot)
    } else {
        bound
    }
}

/// Rates planned at `computed_at` for each EV over the horizon.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule {
    pub computed_at: usize,
    pub rates: HashMap<String, Vec<f64>>,
}

impl Schedule {
    pub fn rate(&self, session_id: &str, k: usize) -> Option<f64> {
        let t = k.checked_sub(self.computed_at)?;
        self.rates
            .get(session_id)
            .map(|r| r.get(t).copied().unwrap_or(0.0))
    }
}

/// Pilot constraints shared by every scheduling policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlOptions {
    /// Use the EVSEs' discrete pilot sets and minimum rates.
    pub quantized: bool,
    pub constraint_mode: ConstraintMode,
}

impl ControlOptions {
    pub fn rate_set(&self, network: &ChargingNetwork, evse_index: usize) -> crate::infra::RateSet {
        network.evses[evse_index].rate_set(!self.quantized)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsaConfig {
    pub utility: UtilityConfig,
    /// Maximum horizon in periods (12 h at 5-minute periods).
    pub horizon_periods: usize,
    pub recompute_period: usize,
    pub solver: SolveOptions,
}

impl AsaConfig {
    pub fn new(utility: UtilityConfig) -> Self {
        AsaConfig {
            utility,
            horizon_periods: 144,
            recompute_period: 1,
            solver: SolveOptions::default(),
        }
    }
}

/// Counters over the lifetime of a scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub solves: usize,
    pub fallbacks: usize,
    /// Solves that stopped at the iteration limit.
    pub inexact: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub cuts: usize,
}

#[derive(Debug, Clone)]
pub struct AdaptiveScheduler {
    pub config: AsaConfig,
    pub control: ControlOptions,
    schedule: Option<Schedule>,
    last_solve: Option<usize>,
    /// Angle of the binding phasor per (constraint, absolute period).
    hints: HashMap<(usize, usize), Vec<f64>>,
    pub stats: SolveStats,
}

impl AdaptiveScheduler {
    pub fn new(config: AsaConfig, control: ControlOptions) -> Self {
        AdaptiveScheduler {
            config,
            control,
            schedule: None,
            last_solve: None,
            hints: HashMap::new(),
            stats: SolveStats::default(),
        }
    }

    pub fn needs_recompute(&self, k: usize, event_fired: bool) -> bool {
        match self.last_solve {
            None => true,
            Some(last) => {
                event_fired || k.saturating_sub(last) >= self.config.recompute_period.max(1)
            }
        }
    }

    /// Pilots for period `k`, one per entry of `evs` (zero for inactive EVs).
    pub fn step(
        &mut self,
        evs: &[EvState],
        network: &ChargingNetwork,
        k: usize,
        event_fired: bool,
        ctx: &SignalContext,
    ) -> Result<Vec<f64>> {
        let active = active_set(evs, k);
        let mut pilots = vec![0.0; evs.len()];
        if active.is_empty() {
            self.schedule = None;
            return Ok(pilots);
        }
        let missing = self.schedule.as_ref().is_none_or(|s| {
            active
                .iter()
                .any(|&i| !s.rates.contains_key(&evs[i].session_id))
        });
        if missing || self.needs_recompute(k, event_fired) {
            if let Some(fallback) = self.recompute(evs, &active, network, k, ctx)? {
                for (&i, p) in active.iter().zip(fallback) {
                    pilots[i] = p;
                }
                return Ok(pilots);
            }
        }
        let schedule = self.schedule.as_ref().expect("schedule computed above");
        let caps: Vec<f64> = active
            .iter()
            .map(|&i| upper_bound(&evs[i], network))
            .collect();
        let r_star: Vec<f64> = active
            .iter()
            .zip(&caps)
            .map(|(&i, &cap)| {
                schedule
                    .rate(&evs[i].session_id, k)
                    .unwrap_or(0.0)
                    .clamp(0.0, cap)
            })
            .collect();
        let chosen = self.realize(evs, &active, network, k, &r_star, &caps);
        for (&i, p) in active.iter().zip(chosen) {
            pilots[i] = p;
        }
        Ok(pilots)
    }

    /// Turn planned rates into pilots that are allowed and network-feasible.
    fn realize(
        &self,
        evs: &[EvState],
        active: &[usize],
        network: &ChargingNetwork,
        k: usize,
        r_star: &[f64],
        caps: &[f64],
    ) -> Vec<f64> {
        let mode = self.control.constraint_mode;
        let mut full = vec![0.0; network.evses.len()];
        let mut feasible = |p: &[f64]| {
            for (&i, &v) in active.iter().zip(p) {
                full[evs[i].evse_index] = v;
            }
            network.is_feasible(&full, k, FEASIBILITY_TOL, mode)
        };
        if self.control.quantized {
            let sets: Vec<_> = active
                .iter()
                .map(|&i| self.control.rate_set(network, evs[i].evse_index))
                .collect();
            quantize_and_reclaim(r_star, caps, &sets, feasible)
        } else {
            let mut p = r_star.to_vec();
            let mut rounds = 0;
            while !feasible(&p) && rounds < 100 {
                for v in &mut p {
                    *v *= 1.0 - 1e-4;
                }
                rounds += 1;
            }
            if !feasible(&p) {
                p.iter_mut().for_each(|v| *v = 0.0);
            }
            p
        }
    }

    /// Solve a new schedule. Returns fallback pilots (for `active`) when the
    /// program cannot be solved.
    fn recompute(
        &mut self,
        evs: &[EvState],
        active: &[usize],
        network: &ChargingNetwork,
        k: usize,
        ctx: &SignalContext,
    ) -> Result<Option<Vec<f64>>> {
        self.last_solve = Some(k);
        let refs: Vec<&EvState> = active.iter().map(|&i| &evs[i]).collect();

        if self.control.quantized
            && !baselines::minimum_rates_feasible(&refs, network, k, &self.control)
        {
            return Ok(Some(self.fallback(&refs, network, k)));
        }

        let horizon = refs
            .iter()
            .map(|ev| ev.remaining_duration(k))
            .max()
            .unwrap_or(1)
            .min(self.config.horizon_periods)
            .max(1);
        let opts = BuildOptions {
            horizon,
            quantized: self.control.quantized,
            constraint_mode: self.control.constraint_mode,
            limit_margin: self.config.solver.tol,
        };
        let problem = build_opt(&refs, network, &self.config.utility, ctx, k, &opts)?;
        let hints: Vec<Vec<f64>> = problem
            .cone_keys
            .iter()
            .map(|key| self.hints.get(key).cloned().unwrap_or_default())
            .collect();
        let solution = solver::solve_with_hints(&problem.program, &self.config.solver, &hints)?;
        self.stats.solves += 1;
        self.stats.outer_iterations += solution.outer_iterations;
        self.stats.inner_iterations += solution.inner_iterations;
        self.stats.cuts += solution.cuts;
        if solution.status == Status::MaxIter {
            self.stats.inexact += 1;
            log::debug!(
                "period {k}: solver stopped at its iteration limit (violation {:.2e})",
                solution.max_violation
            );
        }
        if solution.status == Status::Infeasible {
            log::debug!("period {k}: scheduling program infeasible, using minimum-rate fallback");
            return Ok(Some(self.fallback(&refs, network, k)));
        }

        self.hints.clear();
        for (active, &key) in solution.active_cuts.iter().zip(&problem.cone_keys) {
            if !active.is_empty() && key.1 > k {
                self.hints.insert(key, active.clone());
            }
        }
        let rates = problem.rates(&solution.x);
        self.schedule = Some(Schedule {
            computed_at: k,
            rates: refs
                .iter()
                .zip(rates)
                .map(|(ev, r)| (ev.session_id.clone(), r))
                .collect(),
        });
        Ok(None)
    }

    fn fallback(&mut self, refs: &[&EvState], network: &ChargingNetwork, k: usize) -> Vec<f64> {
        self.stats.fallbacks += 1;
        self.schedule = None;
        self.last_solve = None;
        let order = baselines::priority_order(refs, network, k, baselines::SortKey::Laxity);
        baselines::minimum_rate_fallback(refs, &order, network, k, &self.control)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infra::{Evse, Limit, NetworkConstraint};
    use num_complex::Complex64;

    fn ev(id: &str, evse: usize, departure: usize, energy: f64) -> EvState {
        EvState {
            session_id: id.into(),
            evse_index: evse,
            arrival: 0,
            departure,
            requested_energy: energy,
            remaining_energy: energy,
            pilot_upper_bound: 32.0,
            last_pilot: 0.0,
            last_measured: 0.0,
        }
    }

    #[test]
    fn active_set_rules() {
        let evs = vec![ev("a", 0, 5, 0.0), ev("b", 0, 3, 10.0), ev("c", 0, 8, 5.0)];
        assert_eq!(active_set(&evs, 3), vec![2]);
        assert_eq!(active_set(&evs, 0), vec![1, 2]);
    }

    #[test]
    fn rampdown_rules() {
        let p = RampdownParams::default();
        assert_eq!(rampdown_update(32.0, 20.0, 32.0, &p, 32.0), 21.0);
        assert_eq!(rampdown_update(21.0, 20.5, 21.0, &p, 32.0), 22.0);
        assert_eq!(rampdown_update(16.0, 16.0, 32.0, &p, 32.0), 32.0);
        assert_eq!(rampdown_update(32.0, 31.5, 32.0, &p, 32.0), 32.0);
    }

    #[test]
    fn recompute_trigger() {
        let control = ControlOptions {
            quantized: false,
            constraint_mode: ConstraintMode::Soc,
        };
        let mut config = AsaConfig::new(UtilityConfig::asa_qc());
        config.recompute_period = 3;
        let mut s = AdaptiveScheduler::new(config, control);
        assert!(s.needs_recompute(0, false));
        s.last_solve = Some(10);
        assert!(!s.needs_recompute(11, false));
        assert!(s.needs_recompute(11, true));
        assert!(s.needs_recompute(13, false));
        s.config.recompute_period = 1;
        assert!(s.needs_recompute(11, false));
    }

    #[test]
    fn feedback_uses_measured_energy() {
        let mut e = ev("a", 0, 10, 100.0);
        e.record(32.0, 20.0, None, 32.0);
        assert_eq!(e.remaining_energy, 80.0);
        assert_eq!(e.pilot_upper_bound, 32.0);
        e.record(32.0, 20.0, Some(&RampdownParams::default()), 32.0);
        assert_eq!(e.remaining_energy, 60.0);
        assert_eq!(e.pilot_upper_bound, 21.0);
    }

    fn shared_line(limit: f64) -> ChargingNetwork {
        let evses = vec![
            Evse::stepped("a", 0.0, 6.0, 32.0, 1.0),
            Evse::stepped("b", 0.0, 6.0, 32.0, 1.0),
        ];
        let c = NetworkConstraint {
            id: "line".into(),
            coefficients: vec![Complex64::new(1.0, 0.0); 2],
            limit: Limit::Constant(limit),
            background_load: vec![],
        };
        ChargingNetwork::new(evses, vec![c], 208.0).unwrap()
    }

    #[test]
    fn step_plans_and_reuses_schedule() {
        let net = shared_line(40.0);
        let control = ControlOptions {
            quantized: false,
            constraint_mode: ConstraintMode::Soc,
        };
        let mut config = AsaConfig::new(UtilityConfig::asa_qc());
        config.recompute_period = 5;
        let mut s = AdaptiveScheduler::new(config, control);
        let evs = vec![ev("a", 0, 4, 64.0), ev("b", 1, 4, 64.0)];
        let ctx = SignalContext::neutral(Default::default());
        let p0 = s.step(&evs, &net, 0, true, &ctx).unwrap();
        assert_eq!(s.stats.solves, 1);
        assert!((p0[0] + p0[1] - 40.0).abs() < 1e-3, "{p0:?}");
        assert!((p0[0] - p0[1]).abs() < 1e-2, "{p0:?}");
        let p1 = s.step(&evs, &net, 1, false, &ctx).unwrap();
        assert_eq!(s.stats.solves, 1);
        assert!(p1[0] + p1[1] <= 40.0 + 1e-6);
    }
}
