//! Closed-loop, period-by-period simulation of a charging site and the
//! perfect-information benchmark.
//!
//! Within each period events are processed in a fixed order: departures,
//! arrivals, the recompute check, pilot selection, then metering of the
//! currents actually drawn.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, Baseline};
use crate::battery::{fit_to_session, BatteryModel, BatteryState};
use crate::billing::{self, BillingResult, Calendar, Tariff};
use crate::infra::{ChargingNetwork, ConstraintMode};
use crate::scheduler::{
    active_set, AdaptiveScheduler, AsaConfig, ControlOptions, EvState, RampdownParams,
    SignalContext, SolveStats, UtilityConfig,
};
use crate::solver::SolveOptions;
use crate::workload::{DayOfWeek, Session, TimeBase};
use crate::{Error, Result, FEASIBILITY_TOL};

mod offline;
mod output;

pub use offline::{offline_optimal, offline_problem, realized_objective, OfflineResult};
pub use output::{
    write_session_csv, write_site_csv, write_summary_json, write_traces_csv, Summary,
};

/// Days per billing month used to prorate the demand charge.
pub const DAYS_PER_MONTH: f64 = 30.0;

/// Modeling assumptions of one experiment.
///
/// Serialized as its preset name (`"II"`) when it matches one, otherwise as
/// the three flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioRepr", into = "ScenarioRepr")]
pub struct Scenario {
    pub perfect_information: bool,
    pub continuous_evse: bool,
    pub ideal_battery: bool,
}

impl Scenario {
    pub const I: Scenario = Scenario::new(true, true, true);
    pub const II: Scenario = Scenario::new(false, true, true);
    pub const III: Scenario = Scenario::new(false, false, true);
    pub const IV: Scenario = Scenario::new(false, true, false);
    pub const V: Scenario = Scenario::new(false, false, false);

    const fn new(perfect_information: bool, continuous_evse: bool, ideal_battery: bool) -> Self {
        Scenario {
            perfect_information,
            continuous_evse,
            ideal_battery,
        }
    }

    /// Preset by roman numeral (`"I"` … `"V"`) or digit.
    pub fn by_name(name: &str) -> Option<Scenario> {
        match name.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Some(Scenario::I),
            "II" | "2" => Some(Scenario::II),
            "III" | "3" => Some(Scenario::III),
            "IV" | "4" => Some(Scenario::IV),
            "V" | "5" => Some(Scenario::V),
            _ => None,
        }
    }

    pub fn name(&self) -> Option<&'static str> {
        [
            ("I", Scenario::I),
            ("II", Scenario::II),
            ("III", Scenario::III),
            ("IV", Scenario::IV),
            ("V", Scenario::V),
        ]
        .into_iter()
        .find(|(_, s)| s == self)
        .map(|(n, _)| n)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ScenarioRepr {
    Name(String),
    Flags {
        perfect_information: bool,
        continuous_evse: bool,
        ideal_battery: bool,
    },
}

impl TryFrom<ScenarioRepr> for Scenario {
    type Error = String;

    fn try_from(repr: ScenarioRepr) -> std::result::Result<Self, String> {
        match repr {
            ScenarioRepr::Name(name) => {
                Scenario::by_name(&name).ok_or_else(|| format!("unknown scenario `{name}`"))
            }
            ScenarioRepr::Flags {
                perfect_information,
                continuous_evse,
                ideal_battery,
            } => Ok(Scenario::new(
                perfect_information,
                continuous_evse,
                ideal_battery,
            )),
        }
    }
}

impl From<Scenario> for ScenarioRepr {
    fn from(s: Scenario) -> Self {
        match s.name() {
            Some(name) => ScenarioRepr::Name(name.to_string()),
            None => ScenarioRepr::Flags {
                perfect_information: s.perfect_information,
                continuous_evse: s.continuous_evse,
                ideal_battery: s.ideal_battery,
            },
        }
    }
}

/// Named scheduling algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    AsaQc,
    AsaPm,
    AsaPmHint,
    Llf,
    Edf,
    Rr,
    Uncontrolled,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::AsaQc,
        Algorithm::AsaPm,
        Algorithm::AsaPmHint,
        Algorithm::Llf,
        Algorithm::Edf,
        Algorithm::Rr,
        Algorithm::Uncontrolled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::AsaQc => "asa-qc",
            Algorithm::AsaPm => "asa-pm",
            Algorithm::AsaPmHint => "asa-pm-hint",
            Algorithm::Llf => "llf",
            Algorithm::Edf => "edf",
            Algorithm::Rr => "rr",
            Algorithm::Uncontrolled => "uncontrolled",
        }
    }

    /// The scheduling policy, using the preset utility for ASA variants.
    pub fn policy(self, revenue_per_kwh: f64) -> Policy {
        let asa = |utility, use_peak_hint| Policy::Asa {
            name: self.name().to_string(),
            utility,
            use_peak_hint,
        };
        match self {
            Algorithm::AsaQc => asa(UtilityConfig::asa_qc(), false),
            Algorithm::AsaPm => asa(UtilityConfig::asa_pm(revenue_per_kwh), false),
            Algorithm::AsaPmHint => asa(UtilityConfig::asa_pm(revenue_per_kwh), true),
            Algorithm::Llf => Policy::Baseline(Baseline::Llf),
            Algorithm::Edf => Policy::Baseline(Baseline::Edf),
            Algorithm::Rr => Policy::Baseline(Baseline::RoundRobin),
            Algorithm::Uncontrolled => Policy::Baseline(Baseline::Uncontrolled),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm `{s}`")))
    }
}

/// How pilots are chosen each period.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    /// The adaptive scheduler with a given objective.
    Asa {
        name: String,
        utility: UtilityConfig,
        /// Feed [`SimConfig::peak_hint_kw`] into the demand-charge term.
        use_peak_hint: bool,
    },
    Baseline(Baseline),
}

impl Policy {
    pub fn name(&self) -> String {
        match self {
            Policy::Asa { name, .. } => name.clone(),
            Policy::Baseline(b) => b.to_string(),
        }
    }

    /// Whether the policy respects the network (all but uncontrolled).
    pub fn is_controlled(&self) -> bool {
        !matches!(self, Policy::Baseline(Baseline::Uncontrolled))
    }
}

/// Everything a run needs besides the network, sessions and policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub scenario: Scenario,
    pub constraint_mode: ConstraintMode,
    pub time_base: TimeBase,
    /// Day of week of period 0 (periods start at midnight).
    pub start_day: DayOfWeek,
    pub tariff: Option<Tariff>,
    /// Revenue `π` per delivered kWh, in dollars.
    pub revenue_per_kwh: f64,
    /// Length of the billing period in days; defaults to the simulated days.
    /// The monthly demand charge is prorated to this length.
    pub billing_days: Option<usize>,
    /// Force rampdown on or off; by default it runs with non-ideal batteries.
    pub rampdown: Option<bool>,
    pub rampdown_params: RampdownParams,
    pub tail_start_soc: f64,
    pub horizon_periods: usize,
    pub recompute_period: usize,
    pub solver: SolveOptions,
    /// Peak hint `q'` in kW for policies that use one.
    pub peak_hint_kw: f64,
    /// Largest offline program, in variables.
    pub offline_variable_budget: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scenario: Scenario::II,
            constraint_mode: ConstraintMode::Soc,
            time_base: TimeBase::default(),
            start_day: DayOfWeek::Mon,
            tariff: None,
            revenue_per_kwh: 0.30,
            billing_days: None,
            rampdown: None,
            rampdown_params: RampdownParams::default(),
            tail_start_soc: 0.8,
            horizon_periods: 144,
            recompute_period: 1,
            solver: SolveOptions::default(),
            peak_hint_kw: 0.0,
            offline_variable_budget: 2_000_000,
        }
    }
}

impl SimConfig {
    pub fn control(&self) -> ControlOptions {
        ControlOptions {
            quantized: !self.scenario.continuous_evse,
            constraint_mode: self.constraint_mode,
        }
    }

    pub fn calendar(&self) -> Calendar {
        Calendar {
            period_minutes: self.time_base.period_minutes,
            start_day: self.start_day,
        }
    }

    pub fn battery_model(&self) -> BatteryModel {
        if self.scenario.ideal_battery {
            BatteryModel::Ideal
        } else {
            BatteryModel::TwoStage {
                tail_start_soc: self.tail_start_soc,
            }
        }
    }

    pub fn rampdown_enabled(&self) -> bool {
        self.rampdown.unwrap_or(!self.scenario.ideal_battery)
    }

    /// Billing period length for a run lasting `periods`.
    pub fn billing_days_for(&self, periods: usize) -> usize {
        self.billing_days
            .unwrap_or_else(|| periods.div_ceil(self.time_base.periods_per_day()))
            .max(1)
    }

    /// The tariff with its demand charge prorated to the billing period.
    pub fn effective_tariff(&self, periods: usize) -> Option<Tariff> {
        let days = self.billing_days_for(periods) as f64;
        self.tariff
            .as_ref()
            .map(|t| t.prorated(days / DAYS_PER_MONTH))
    }

    pub fn asa_config(&self, utility: UtilityConfig) -> AsaConfig {
        AsaConfig {
            utility,
            horizon_periods: self.horizon_periods,
            recompute_period: self.recompute_period,
            solver: self.solver,
        }
    }
}

/// One session's trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub id: String,
    pub evse_id: String,
    pub arrival: usize,
    pub departure: usize,
    /// Amp-periods.
    pub requested: f64,
    pub delivered: f64,
    /// Pilot per period from `arrival` (index 0) to `departure − 1`.
    pub pilot: Vec<f64>,
    pub measured: Vec<f64>,
    /// Σ (pilot − measured) over periods that began in the battery tail.
    pub tail_unused: f64,
}

/// Per-period feasibility audit of the commanded pilots.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Audit {
    /// Whether the policy is expected to pass (uncontrolled is exempt).
    pub enforced: bool,
    pub periods: usize,
    pub violations: usize,
    /// Worst excess over any limit, in amps.
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub algorithm: String,
    pub scenario: Scenario,
    pub periods: usize,
    pub time_base: TimeBase,
    pub sessions: Vec<SessionTrace>,
    /// Σ measured current per period, in amps.
    pub load_amps: Vec<f64>,
    /// Magnitude of each constraint's current per period, `[constraint][period]`.
    pub constraint_current: Vec<Vec<f64>>,
    pub constraint_ids: Vec<String>,
    pub billing: Option<BillingResult>,
    pub demand_met: f64,
    pub audit: Audit,
    pub solver: SolveStats,
}

impl SimResult {
    pub fn requested_kwh(&self) -> f64 {
        self.sessions.iter().map(|s| s.requested).sum::<f64>() * self.time_base.kwh_per_amp_period()
    }

    pub fn delivered_kwh(&self) -> f64 {
        self.sessions.iter().map(|s| s.delivered).sum::<f64>() * self.time_base.kwh_per_amp_period()
    }

    pub fn load_kw(&self) -> Vec<f64> {
        let k = self.time_base.kw_per_amp();
        self.load_amps.iter().map(|a| a * k).collect()
    }

    pub fn peak_kw(&self) -> f64 {
        self.load_kw().into_iter().fold(0.0, f64::max)
    }

    /// Σ (pilot − measured) over tail periods, across sessions.
    pub fn tail_unused(&self) -> f64 {
        self.sessions.iter().map(|s| s.tail_unused).sum()
    }

    /// Measured rates of every session as a matrix aligned with `sessions`,
    /// each row indexed by absolute period.
    pub fn measured_matrix(&self) -> Vec<Vec<f64>> {
        self.sessions
            .iter()
            .map(|s| {
                let mut row = vec![0.0; s.departure];
                row[s.arrival..].copy_from_slice(&s.measured);
                row
            })
            .collect()
    }
}

/// Fraction of requested energy that was delivered (1 when nothing was requested).
pub fn demand_met(result: &SimResult) -> f64 {
    let requested: f64 = result.sessions.iter().map(|s| s.requested).sum();
    if requested <= 0.0 {
        return 1.0;
    }
    result.sessions.iter().map(|s| s.delivered).sum::<f64>() / requested
}

/// Check sessions against the network: valid, known EVSE, no overlaps.
pub fn validate_sessions(network: &ChargingNetwork, sessions: &[Session]) -> Result<()> {
    let mut by_evse: HashMap<&str, Vec<&Session>> = HashMap::new();
    for s in sessions {
        s.validate()?;
        if network.evse_index(&s.evse_id).is_none() {
            return Err(Error::UnknownEvse(s.evse_id.clone()));
        }
        by_evse.entry(&s.evse_id).or_default().push(s);
    }
    let mut evses: Vec<_> = by_evse.into_iter().collect();
    evses.sort_by(|a, b| a.0.cmp(b.0));
    for (evse, mut list) in evses {
        list.sort_by(|a, b| a.arrival.cmp(&b.arrival).then(a.id.cmp(&b.id)));
        for w in list.windows(2) {
            if w[1].arrival < w[0].departure {
                return Err(Error::OverlappingSessions {
                    evse: evse.to_string(),
                    first: w[0].id.clone(),
                    second: w[1].id.clone(),
                });
            }
        }
    }
    Ok(())
}

enum Controller {
    Asa {
        scheduler: Box<AdaptiveScheduler>,
        use_peak_hint: bool,
    },
    Baseline(Baseline),
    /// Replays fixed per-session rates (offline benchmark).
    OpenLoop(HashMap<String, Vec<f64>>),
}

/// Mutable state of a run.
struct Plant {
    present: Vec<EvState>,
    batteries: Vec<BatteryState>,
    /// Index of each present EV's trace.
    trace_index: Vec<usize>,
}

/// Simulate `sessions` on `network` under `policy`.
pub fn run(
    network: &ChargingNetwork,
    sessions: &[Session],
    policy: &Policy,
    config: &SimConfig,
) -> Result<SimResult> {
    let controller = match policy {
        Policy::Asa {
            utility,
            use_peak_hint,
            ..
        } => {
            utility.validate()?;
            Controller::Asa {
                scheduler: Box::new(AdaptiveScheduler::new(
                    config.asa_config(utility.clone()),
                    config.control(),
                )),
                use_peak_hint: *use_peak_hint,
            }
        }
        Policy::Baseline(b) => Controller::Baseline(*b),
    };
    simulate(
        network,
        sessions,
        controller,
        &policy.name(),
        policy.is_controlled(),
        config,
    )
}

/// Convenience wrapper for a named algorithm.
pub fn run_algorithm(
    network: &ChargingNetwork,
    sessions: &[Session],
    algorithm: Algorithm,
    config: &SimConfig,
) -> Result<SimResult> {
    run(
        network,
        sessions,
        &algorithm.policy(config.revenue_per_kwh),
        config,
    )
}

fn simulate(
    network: &ChargingNetwork,
    sessions: &[Session],
    mut controller: Controller,
    name: &str,
    controlled: bool,
    config: &SimConfig,
) -> Result<SimResult> {
    validate_sessions(network, sessions)?;
    let mut order: Vec<&Session> = sessions.iter().collect();
    order.sort_by(|a, b| a.arrival.cmp(&b.arrival).then(a.id.cmp(&b.id)));
    let periods = order.iter().map(|s| s.departure).max().unwrap_or(0);

    let tb = config.time_base;
    let calendar = config.calendar();
    let tariff = config.effective_tariff(periods);
    let billing_days = config.billing_days_for(periods);
    let control = config.control();
    let model = config.battery_model();
    let rampdown = (controlled && config.rampdown_enabled()).then_some(config.rampdown_params);
    let tail_start = match model {
        BatteryModel::TwoStage { tail_start_soc } => tail_start_soc,
        BatteryModel::Ideal => 1.0,
    };

    let mut traces: Vec<SessionTrace> = order
        .iter()
        .map(|s| SessionTrace {
            id: s.id.clone(),
            evse_id: s.evse_id.clone(),
            arrival: s.arrival,
            departure: s.departure,
            requested: s.requested_energy,
            delivered: 0.0,
            pilot: vec![0.0; s.duration()],
            measured: vec![0.0; s.duration()],
            tail_unused: 0.0,
        })
        .collect();
    let mut plant = Plant {
        present: Vec::new(),
        batteries: Vec::new(),
        trace_index: Vec::new(),
    };
    let mut load_amps = vec![0.0; periods];
    let mut constraint_current = vec![vec![0.0; periods]; network.constraints.len()];
    let mut audit = Audit {
        enforced: controlled,
        ..Audit::default()
    };
    let mut peak_so_far_kw: f64 = 0.0;
    let mut next_arrival = 0;
    let mut full_pilots = vec![0.0; network.evses.len()];
    let mut full_measured = vec![0.0; network.evses.len()];

    for k in 0..periods {
        // departures
        let before = plant.present.len();
        let mut i = 0;
        while i < plant.present.len() {
            if plant.present[i].departure <= k {
                plant.present.remove(i);
                plant.batteries.remove(i);
                plant.trace_index.remove(i);
            } else {
                i += 1;
            }
        }
        let mut event = plant.present.len() != before;

        // arrivals
        while next_arrival < order.len() && order[next_arrival].arrival <= k {
            let s = order[next_arrival];
            let ev = EvState::from_session(s, network)?;
            let max_current = network.evses[ev.evse_index].max_pilot;
            plant.batteries.push(fit_to_session(s, max_current, model)?);
            plant.present.push(ev);
            plant.trace_index.push(next_arrival);
            next_arrival += 1;
            event = true;
        }

        // pilots
        let pilots: Vec<f64> = match &mut controller {
            Controller::Asa {
                scheduler,
                use_peak_hint,
            } => {
                let horizon = plant
                    .present
                    .iter()
                    .map(|ev| ev.remaining_duration(k))
                    .max()
                    .unwrap_or(1)
                    .min(config.horizon_periods)
                    .max(1);
                let ctx = signal_context(
                    config,
                    tariff.as_ref(),
                    &calendar,
                    billing_days,
                    k,
                    horizon,
                    peak_so_far_kw,
                    *use_peak_hint,
                )?;
                scheduler.step(&plant.present, network, k, event, &ctx)?
            }
            Controller::Baseline(kind) => {
                let active = active_set(&plant.present, k);
                let refs: Vec<&EvState> = active.iter().map(|&i| &plant.present[i]).collect();
                let chosen = baselines::schedule(*kind, &refs, network, k, &control);
                let mut out = vec![0.0; plant.present.len()];
                for (&i, p) in active.iter().zip(chosen) {
                    out[i] = p;
                }
                out
            }
            Controller::OpenLoop(rates) => plant
                .present
                .iter()
                .map(|ev| {
                    rates
                        .get(&ev.session_id)
                        .and_then(|r| r.get(k))
                        .copied()
                        .unwrap_or(0.0)
                        .max(0.0)
                })
                .collect(),
        };

        // metering
        full_pilots.iter_mut().for_each(|v| *v = 0.0);
        full_measured.iter_mut().for_each(|v| *v = 0.0);
        for (i, ev) in plant.present.iter_mut().enumerate() {
            let pilot = pilots[i];
            let battery = &mut plant.batteries[i];
            let in_tail = battery.soc() > tail_start;
            let measured = battery.response(pilot, 1.0)?;
            let max_pilot = network.evses[ev.evse_index].max_pilot;
            ev.record(pilot, measured, rampdown.as_ref(), max_pilot);

            let trace = &mut traces[plant.trace_index[i]];
            let t = k - trace.arrival;
            trace.pilot[t] = pilot;
            trace.measured[t] = measured;
            trace.delivered += measured;
            if in_tail {
                trace.tail_unused += pilot - measured;
            }
            full_pilots[ev.evse_index] = pilot;
            full_measured[ev.evse_index] = measured;
            load_amps[k] += measured;
        }
        for (l, row) in constraint_current.iter_mut().enumerate() {
            row[k] = network.phasor_at(l, &full_measured, k).norm();
        }
        if !plant.present.is_empty() {
            audit.periods += 1;
            let v = network.max_violation(&full_pilots, k, ConstraintMode::Soc);
            if v > FEASIBILITY_TOL {
                audit.violations += 1;
                audit.worst = audit.worst.max(v);
            }
        }
        peak_so_far_kw = peak_so_far_kw.max(load_amps[k] * tb.kw_per_amp());
    }

    let solver = match &controller {
        Controller::Asa { scheduler, .. } => scheduler.stats,
        _ => SolveStats::default(),
    };
    let mut result = SimResult {
        algorithm: name.to_string(),
        scenario: config.scenario,
        periods,
        time_base: tb,
        sessions: traces,
        load_amps,
        constraint_current,
        constraint_ids: network.constraints.iter().map(|c| c.id.clone()).collect(),
        billing: None,
        demand_met: 0.0,
        audit,
        solver,
    };
    result.demand_met = demand_met(&result);
    if let Some(tariff) = &tariff {
        result.billing = Some(billing::bill(
            &result.load_kw(),
            result.delivered_kwh(),
            tariff,
            config.revenue_per_kwh,
            calendar,
        )?);
    }
    Ok(result)
}

/// Signals for a solve at period `k` over `horizon` periods.
#[allow(clippy::too_many_arguments)]
fn signal_context(
    config: &SimConfig,
    tariff: Option<&Tariff>,
    calendar: &Calendar,
    billing_days: usize,
    k: usize,
    horizon: usize,
    peak_so_far_kw: f64,
    use_peak_hint: bool,
) -> Result<SignalContext> {
    let mut ctx = SignalContext::neutral(config.time_base);
    if let Some(tariff) = tariff {
        ctx.prices = (0..horizon)
            .map(|t| calendar.price(tariff, k + t))
            .collect();
        let day = calendar.day_index(k).min(billing_days - 1);
        ctx.demand_charge_proxy =
            billing::demand_charge_proxy(tariff.demand_charge_rate, billing_days, day)?;
    }
    ctx.prior_peak_kw = peak_so_far_kw;
    if use_peak_hint {
        ctx.peak_hint_kw = config.peak_hint_kw;
    }
    Ok(ctx)
}
