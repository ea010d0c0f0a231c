//! Time-of-use tariffs, demand charges and operator profit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::workload::DayOfWeek;
use crate::{Error, Result};

const MINUTES_PER_DAY: u32 = 1440;

/// A `[start, end)` window in minutes of the day; `end <= start` wraps past midnight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateWindow {
    pub name: String,
    pub start_minute: u32,
    pub end_minute: u32,
    /// $/kWh.
    pub rate: f64,
}

impl RateWindow {
    fn covers(&self, minute_of_day: u32) -> bool {
        if self.start_minute < self.end_minute {
            (self.start_minute..self.end_minute).contains(&minute_of_day)
        } else {
            minute_of_day >= self.start_minute || minute_of_day < self.end_minute
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    pub name: String,
    pub weekday: Vec<RateWindow>,
    pub weekend: Vec<RateWindow>,
    /// $/kW of billing-period peak.
    pub demand_charge_rate: f64,
}

impl Tariff {
    /// Southern California Edison TOU EV-4 (summer), 20 to 500 kW service.
    pub fn sce_tou_ev4() -> Tariff {
        let w = |name: &str, start_h: u32, end_h: u32, rate: f64| RateWindow {
            name: name.to_string(),
            start_minute: start_h * 60,
            end_minute: end_h * 60,
            rate,
        };
        Tariff {
            name: "sce-tou-ev-4".into(),
            weekday: vec![
                w("off-peak", 23, 8, 0.056),
                w("mid-peak", 8, 12, 0.092),
                w("peak", 12, 18, 0.267),
                w("mid-peak", 18, 23, 0.092),
            ],
            weekend: vec![
                w("off-peak", 23, 8, 0.056),
                w("mid-peak", 8, 12, 0.056),
                w("peak", 12, 18, 0.056),
                w("mid-peak", 18, 23, 0.056),
            ],
            demand_charge_rate: 15.51,
        }
    }

    pub fn by_name(name: &str) -> Option<Tariff> {
        match name {
            "sce-tou-ev-4" => Some(Tariff::sce_tou_ev4()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.demand_charge_rate >= 0.0) {
            return Err(Error::InvalidTariff(
                "demand charge rate must be non-negative".into(),
            ));
        }
        for (label, windows) in [("weekday", &self.weekday), ("weekend", &self.weekend)] {
            for w in windows {
                if !(w.rate >= 0.0)
                    || w.start_minute >= MINUTES_PER_DAY
                    || w.end_minute > MINUTES_PER_DAY
                {
                    return Err(Error::InvalidTariff(format!(
                        "{label} window `{}` is malformed",
                        w.name
                    )));
                }
            }
            for m in 0..MINUTES_PER_DAY {
                let n = windows.iter().filter(|w| w.covers(m)).count();
                if n != 1 {
                    return Err(Error::InvalidTariff(format!(
                        "{label} minute {m} covered by {n} windows (need exactly one)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Copy with the demand charge rate multiplied by `fraction`, e.g. to
    /// bill a one-week window its share of a monthly charge.
    pub fn prorated(&self, fraction: f64) -> Tariff {
        Tariff {
            demand_charge_rate: self.demand_charge_rate * fraction,
            ..self.clone()
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tariff: Tariff = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        tariff.validate()?;
        Ok(tariff)
    }
}

/// $/kWh in force at `absolute_minute` (only the minute of the day matters).
pub fn tou_rate(tariff: &Tariff, absolute_minute: f64, is_weekend: bool) -> f64 {
    let minute_of_day = (absolute_minute.rem_euclid(MINUTES_PER_DAY as f64)) as u32;
    let windows = if is_weekend {
        &tariff.weekend
    } else {
        &tariff.weekday
    };
    windows
        .iter()
        .find(|w| w.covers(minute_of_day))
        .map(|w| w.rate)
        .unwrap_or(0.0)
}

/// Maps period indices onto wall-clock time for pricing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calendar {
    pub period_minutes: f64,
    /// Day of week of period 0 (which starts at midnight).
    pub start_day: DayOfWeek,
}

impl Calendar {
    pub fn day_index(&self, period: usize) -> usize {
        (period as f64 * self.period_minutes / 1440.0).floor() as usize
    }

    pub fn day_of_week(&self, period: usize) -> DayOfWeek {
        DayOfWeek::ALL[(self.start_day as usize + self.day_index(period)) % 7]
    }

    /// Price of energy during `period`, sampled at the period start.
    pub fn price(&self, tariff: &Tariff, period: usize) -> f64 {
        tou_rate(
            tariff,
            period as f64 * self.period_minutes,
            self.day_of_week(period).is_weekend(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BillingResult {
    pub energy_cost: f64,
    pub demand_charge: f64,
    pub revenue: f64,
    pub profit: f64,
    pub peak_kw: f64,
}

/// Bill a metered load profile (kW per period) over one billing period.
pub fn bill(
    load_kw: &[f64],
    delivered_kwh: f64,
    tariff: &Tariff,
    revenue_per_kwh: f64,
    calendar: Calendar,
) -> Result<BillingResult> {
    if let Some(bad) = load_kw.iter().find(|&&p| !(p >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative load entry {bad}")));
    }
    let hours = calendar.period_minutes / 60.0;
    let energy_cost = load_kw
        .iter()
        .enumerate()
        .map(|(t, &kw)| calendar.price(tariff, t) * kw * hours)
        .sum::<f64>();
    let peak_kw = load_kw.iter().copied().fold(0.0, f64::max);
    let demand_charge = tariff.demand_charge_rate * peak_kw;
    let revenue = revenue_per_kwh * delivered_kwh;
    Ok(BillingResult {
        energy_cost,
        demand_charge,
        revenue,
        profit: revenue - energy_cost - demand_charge,
        peak_kw,
    })
}

/// Demand charge scaled to the remaining days of the billing period: `P / (D_p − d)`.
pub fn demand_charge_proxy(rate: f64, billing_days: usize, day_index: usize) -> Result<f64> {
    if day_index >= billing_days {
        return Err(Error::InvalidArgument(format!(
            "day index {day_index} outside billing period of {billing_days} days"
        )));
    }
    Ok(rate / (billing_days - day_index) as f64)
}

/// Peak hint from the previous period's optimal peak (75 %); zero without history.
pub fn peak_hint(previous_optimal_peak_kw: Option<f64>) -> f64 {
    previous_optimal_peak_kw.map_or(0.0, |p| 0.75 * p)
}
