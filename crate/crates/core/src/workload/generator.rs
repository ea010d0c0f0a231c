//! Synthetic workloads matched to per-weekday usage statistics.
//!
//! Daily session counts are Poisson around the weekday mean, arrival hours
//! follow hourly weights, durations are shifted exponentials (30 minute
//! minimum) and energies are gamma distributed (shape 2), both matched to the
//! weekday means. Energy is capped so every session can finish at full rate.

use std::path::Path;

use rand::distr::{weighted::WeightedIndex, Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use super::{kwh_to_amp_periods, Session, TimeBase};
use crate::infra::ChargingNetwork;
use crate::{Error, Result};

const MIN_DURATION_HOURS: f64 = 0.5;
const ENERGY_SHAPE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayOfWeek {
    Mon,
    Tue,
    Wed,
    Thu,
    Fri,
    Sat,
    Sun,
}

impl DayOfWeek {
    pub const ALL: [DayOfWeek; 7] = [
        DayOfWeek::Mon,
        DayOfWeek::Tue,
        DayOfWeek::Wed,
        DayOfWeek::Thu,
        DayOfWeek::Fri,
        DayOfWeek::Sat,
        DayOfWeek::Sun,
    ];

    pub fn is_weekend(self) -> bool {
        matches!(self, DayOfWeek::Sat | DayOfWeek::Sun)
    }

    pub fn succ(self) -> DayOfWeek {
        DayOfWeek::ALL[(self as usize + 1) % 7]
    }

    /// `n` consecutive days starting at `self`.
    pub fn sequence(self, n: usize) -> Vec<DayOfWeek> {
        std::iter::successors(Some(self), |d| Some(d.succ()))
            .take(n)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayStats {
    pub mean_sessions: f64,
    pub mean_duration_hours: f64,
    pub mean_energy_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadStats {
    pub mon: DayStats,
    pub tue: DayStats,
    pub wed: DayStats,
    pub thu: DayStats,
    pub fri: DayStats,
    pub sat: DayStats,
    pub sun: DayStats,
    /// Weekday arrival weights per hour of day (sum to 1).
    pub hourly_weights: Vec<f64>,
    /// Weekend arrival weights; weekday weights apply when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weekend_hourly_weights: Option<Vec<f64>>,
}

fn normalized(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

impl WorkloadStats {
    /// Per-weekday means recorded at the 54-EVSE garage (May to Oct 2018),
    /// with hourly arrival weights shaped after its arrival histogram: a
    /// weekday morning peak between 7:00 and 10:00, a small evening bump
    /// from 18:00, and flatter weekends.
    pub fn caltech() -> Self {
        let d = |s, h, e| DayStats {
            mean_sessions: s,
            mean_duration_hours: h,
            mean_energy_kwh: e,
        };
        #[rustfmt::skip]
        let weekday = [
            0.5, 0.3, 0.2, 0.2, 0.3, 0.8, 2.5, 9.0, 15.0, 13.0, 8.0, 6.0,
            5.5, 5.0, 4.0, 3.5, 3.0, 3.5, 4.5, 3.0, 2.0, 1.5, 1.0, 0.7,
        ];
        #[rustfmt::skip]
        let weekend = [
            0.6, 0.4, 0.3, 0.3, 0.3, 0.5, 1.0, 2.5, 4.0, 5.0, 5.5, 6.0,
            6.0, 6.0, 5.5, 5.5, 5.0, 5.0, 5.0, 4.5, 3.5, 2.5, 1.5, 1.0,
        ];
        WorkloadStats {
            sun: d(41.32, 3.94, 10.05),
            mon: d(71.00, 6.14, 9.54),
            tue: d(76.73, 6.24, 8.94),
            wed: d(75.45, 6.22, 8.75),
            thu: d(78.50, 5.96, 8.47),
            fri: d(77.18, 6.71, 9.04),
            sat: d(43.32, 5.01, 10.15),
            hourly_weights: normalized(&weekday),
            weekend_hourly_weights: Some(normalized(&weekend)),
        }
    }

    pub fn day(&self, day: DayOfWeek) -> &DayStats {
        match day {
            DayOfWeek::Mon => &self.mon,
            DayOfWeek::Tue => &self.tue,
            DayOfWeek::Wed => &self.wed,
            DayOfWeek::Thu => &self.thu,
            DayOfWeek::Fri => &self.fri,
            DayOfWeek::Sat => &self.sat,
            DayOfWeek::Sun => &self.sun,
        }
    }

    fn weights(&self, day: DayOfWeek) -> &[f64] {
        match (&self.weekend_hourly_weights, day.is_weekend()) {
            (Some(w), true) => w,
            _ => &self.hourly_weights,
        }
    }

    /// Same statistics with every mean session count multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        for d in DayOfWeek::ALL {
            let stats = match d {
                DayOfWeek::Mon => &mut s.mon,
                DayOfWeek::Tue => &mut s.tue,
                DayOfWeek::Wed => &mut s.wed,
                DayOfWeek::Thu => &mut s.thu,
                DayOfWeek::Fri => &mut s.fri,
                DayOfWeek::Sat => &mut s.sat,
                DayOfWeek::Sun => &mut s.sun,
            };
            stats.mean_sessions *= factor;
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        for d in DayOfWeek::ALL {
            let s = self.day(d);
            if !(s.mean_sessions > 0.0 && s.mean_duration_hours > 0.0 && s.mean_energy_kwh > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{d:?}: all means must be positive"
                )));
            }
        }
        let check = |w: &[f64], name: &str| -> Result<()> {
            if w.len() != 24
                || w.iter().any(|&x| !(x >= 0.0))
                || (w.iter().sum::<f64>() - 1.0).abs() > 1e-6
            {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be 24 non-negative weights summing to 1"
                )));
            }
            Ok(())
        };
        check(&self.hourly_weights, "hourly_weights")?;
        if let Some(w) = &self.weekend_hourly_weights {
            check(w, "weekend_hourly_weights")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stats: WorkloadStats =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        stats.validate()?;
        Ok(stats)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub time_base: TimeBase,
    /// Multiplier on mean daily session counts (e.g. to fit a smaller site).
    pub session_scale: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            time_base: TimeBase::default(),
            session_scale: 1.0,
        }
    }
}

struct Draft {
    arrival_minute: f64,
    departure_minute: f64,
    kwh: f64,
}

/// Generate sessions for consecutive `days` on `network`; deterministic in `seed`.
///
/// Sessions arriving when every EVSE is occupied are discarded, as are
/// departures past midnight of the last day (truncated).
pub fn generate_workload(
    stats: &WorkloadStats,
    days: &[DayOfWeek],
    network: &ChargingNetwork,
    config: GeneratorConfig,
    seed: u64,
) -> Vec<Session> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = config.time_base;
    let horizon_minutes = days.len() as f64 * 1440.0;
    let minute = Uniform::new(0.0, 60.0).expect("valid range");

    let mut drafts = Vec::new();
    for (d, &day) in days.iter().enumerate() {
        let s = stats.day(day);
        let lambda = s.mean_sessions * config.session_scale;
        let count = if lambda > 0.0 {
            Poisson::new(lambda)
                .expect("positive mean")
                .sample(&mut rng) as usize
        } else {
            0
        };
        let hours = WeightedIndex::new(stats.weights(day)).expect("valid weights");
        let extra = (s.mean_duration_hours - MIN_DURATION_HOURS).max(1e-3);
        let duration = Exp::new(1.0 / extra).expect("positive rate");
        let energy = Gamma::new(ENERGY_SHAPE, s.mean_energy_kwh / ENERGY_SHAPE)
            .expect("positive parameters");
        for _ in 0..count {
            let arrival =
                d as f64 * 1440.0 + hours.sample(&mut rng) as f64 * 60.0 + minute.sample(&mut rng);
            let hours = MIN_DURATION_HOURS + duration.sample(&mut rng);
            drafts.push(Draft {
                arrival_minute: arrival,
                departure_minute: (arrival + hours * 60.0).min(horizon_minutes),
                kwh: energy.sample(&mut rng),
            });
        }
    }
    drafts.sort_by(|a, b| a.arrival_minute.total_cmp(&b.arrival_minute));

    let mut free_at = vec![0usize; network.evses.len()];
    let mut sessions = Vec::new();
    for draft in drafts {
        let arrival = (draft.arrival_minute / base.period_minutes).floor() as usize;
        let departure = (draft.departure_minute / base.period_minutes).ceil() as usize;
        if departure <= arrival {
            continue;
        }
        let free: Vec<usize> = (0..free_at.len())
            .filter(|&i| free_at[i] <= arrival)
            .collect();
        if free.is_empty() {
            continue;
        }
        let evse = free[rng.random_range(0..free.len())];
        free_at[evse] = departure;
        let max_pilot = network.evses[evse].max_pilot;
        let cap_kwh = max_pilot * (departure - arrival) as f64 * base.kwh_per_amp_period();
        let kwh = draft.kwh.min(cap_kwh).max(1e-3);
        sessions.push(Session {
            id: format!("s{:05}", sessions.len()),
            evse_id: network.evses[evse].id.clone(),
            arrival,
            departure,
            requested_energy: kwh_to_amp_periods(kwh, base.voltage, base.period_minutes)
                .expect("positive energy"),
            original_kwh: kwh,
        });
    }
    sessions
}
