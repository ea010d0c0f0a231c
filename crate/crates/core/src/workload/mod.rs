//! Charging sessions, recorded datasets and synthetic workloads.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::infra::ChargingNetwork;
use crate::{Error, Result};

mod generator;

pub use generator::{generate_workload, DayOfWeek, DayStats, GeneratorConfig, WorkloadStats};

/// One EV visit. Times are period indices; energy is in amp-periods at the
/// network's nominal voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub evse_id: String,
    pub arrival: usize,
    pub departure: usize,
    pub requested_energy: f64,
    pub original_kwh: f64,
}

impl Session {
    pub fn validate(&self) -> Result<()> {
        if self.departure <= self.arrival {
            return Err(Error::InvalidSession(format!(
                "`{}` departs at {} before arriving at {}",
                self.id, self.departure, self.arrival
            )));
        }
        if !(self.requested_energy > 0.0) {
            return Err(Error::InvalidSession(format!(
                "`{}` requests no energy",
                self.id
            )));
        }
        Ok(())
    }

    pub fn duration(&self) -> usize {
        self.departure - self.arrival
    }
}

/// Units shared by everything that converts between kWh and amp-periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBase {
    pub voltage: f64,
    pub period_minutes: f64,
}

impl Default for TimeBase {
    fn default() -> Self {
        TimeBase {
            voltage: 208.0,
            period_minutes: 5.0,
        }
    }
}

impl TimeBase {
    /// kWh carried by one amp over one period.
    pub fn kwh_per_amp_period(&self) -> f64 {
        self.voltage * self.period_minutes / 60.0 / 1000.0
    }

    pub fn kw_per_amp(&self) -> f64 {
        self.voltage / 1000.0
    }

    pub fn periods_per_day(&self) -> usize {
        (1440.0 / self.period_minutes).round() as usize
    }
}

/// `kwh · 1000 / voltage / (period_minutes / 60)`.
pub fn kwh_to_amp_periods(kwh: f64, voltage: f64, period_minutes: f64) -> Result<f64> {
    if !(kwh > 0.0 && voltage > 0.0 && period_minutes > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kwh_to_amp_periods needs positive arguments, got ({kwh}, {voltage}, {period_minutes})"
        )));
    }
    Ok(kwh * 1000.0 / voltage / (period_minutes / 60.0))
}

pub fn amp_periods_to_kwh(amp_periods: f64, voltage: f64, period_minutes: f64) -> f64 {
    amp_periods * voltage * (period_minutes / 60.0) / 1000.0
}

/// Dataset row as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub evse_id: String,
    pub connect_minute: f64,
    pub disconnect_minute: f64,
    pub kwh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub sessions: Vec<Session>,
    /// Records dropped for non-positive duration or energy.
    pub dropped: usize,
}

/// Convert raw records into sessions, snapping connect times down and
/// disconnect times up to period boundaries.
pub fn sessions_from_records(
    records: &[SessionRecord],
    network: &ChargingNetwork,
    base: TimeBase,
) -> Result<LoadedDataset> {
    let mut sessions = Vec::with_capacity(records.len());
    let mut dropped = 0;
    for rec in records {
        if network.evse_index(&rec.evse_id).is_none() {
            return Err(Error::UnknownEvse(rec.evse_id.clone()));
        }
        let arrival = (rec.connect_minute / base.period_minutes).floor().max(0.0) as usize;
        let departure = (rec.disconnect_minute / base.period_minutes)
            .ceil()
            .max(0.0) as usize;
        if rec.disconnect_minute <= rec.connect_minute || departure <= arrival || !(rec.kwh > 0.0) {
            dropped += 1;
            continue;
        }
        sessions.push(Session {
            id: rec.id.clone(),
            evse_id: rec.evse_id.clone(),
            arrival,
            departure,
            requested_energy: kwh_to_amp_periods(rec.kwh, base.voltage, base.period_minutes)?,
            original_kwh: rec.kwh,
        });
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} invalid session records");
    }
    sessions.sort_by(|a, b| a.arrival.cmp(&b.arrival).then_with(|| a.id.cmp(&b.id)));
    Ok(LoadedDataset { sessions, dropped })
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    network: &ChargingNetwork,
    base: TimeBase,
) -> Result<LoadedDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<SessionRecord> =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    sessions_from_records(&records, network, base)
}

pub fn records_from_sessions(sessions: &[Session], base: TimeBase) -> Vec<SessionRecord> {
    sessions
        .iter()
        .map(|s| SessionRecord {
            id: s.id.clone(),
            evse_id: s.evse_id.clone(),
            connect_minute: s.arrival as f64 * base.period_minutes,
            disconnect_minute: s.departure as f64 * base.period_minutes,
            kwh: s.original_kwh,
        })
        .collect()
}

pub fn save_dataset(path: impl AsRef<Path>, sessions: &[Session], base: TimeBase) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&records_from_sessions(sessions, base))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
