//! Results files: per-period CSV traces and a JSON summary.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::billing::BillingResult;
use crate::scheduler::SolveStats;
use crate::{Error, Result};

use super::{Audit, SimResult};

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: String,
    pub scenario: Option<String>,
    pub periods: usize,
    pub sessions: usize,
    pub requested_kwh: f64,
    pub delivered_kwh: f64,
    pub demand_met: f64,
    pub peak_kw: f64,
    pub tail_unused_amp_periods: f64,
    pub billing: Option<BillingResult>,
    pub audit: Audit,
    pub solver: SolveStats,
}

impl Summary {
    pub fn of(result: &SimResult) -> Self {
        Summary {
            algorithm: result.algorithm.clone(),
            scenario: result.scenario.name().map(str::to_string),
            periods: result.periods,
            sessions: result.sessions.len(),
            requested_kwh: result.requested_kwh(),
            delivered_kwh: result.delivered_kwh(),
            demand_met: result.demand_met,
            peak_kw: result.peak_kw(),
            tail_unused_amp_periods: result.tail_unused(),
            billing: result.billing,
            audit: result.audit,
            solver: result.solver,
        }
    }
}

fn create(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// One row per session and plugged-in period: pilot and measured current.
pub fn write_traces_csv(result: &SimResult, path: impl AsRef<Path>) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_record(["period", "session_id", "evse_id", "pilot_a", "measured_a"])?;
    let mut rows: Vec<(usize, usize, usize)> = Vec::new();
    for (s, trace) in result.sessions.iter().enumerate() {
        for t in 0..trace.pilot.len() {
            rows.push((trace.arrival + t, s, t));
        }
    }
    rows.sort_unstable();
    for (k, s, t) in rows {
        let trace = &result.sessions[s];
        w.write_record([
            k.to_string(),
            trace.id.clone(),
            trace.evse_id.clone(),
            trace.pilot[t].to_string(),
            trace.measured[t].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// One row per period: site load and the current through each constraint.
pub fn write_site_csv(result: &SimResult, path: impl AsRef<Path>) -> Result<()> {
    let mut w = create(path.as_ref())?;
    let mut header = vec![
        "period".to_string(),
        "load_a".to_string(),
        "load_kw".to_string(),
    ];
    header.extend(result.constraint_ids.iter().map(|id| format!("{id}_a")));
    w.write_record(&header)?;
    let kw = result.load_kw();
    for k in 0..result.periods {
        let mut row = vec![
            k.to_string(),
            result.load_amps[k].to_string(),
            kw[k].to_string(),
        ];
        row.extend(result.constraint_current.iter().map(|c| c[k].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// One row per session: request, delivery and timing.
pub fn write_session_csv(result: &SimResult, path: impl AsRef<Path>) -> Result<()> {
    let mut w = create(path.as_ref())?;
    w.write_record([
        "session_id",
        "evse_id",
        "arrival",
        "departure",
        "requested_amp_periods",
        "delivered_amp_periods",
    ])?;
    for s in &result.sessions {
        w.write_record([
            s.id.clone(),
            s.evse_id.clone(),
            s.arrival.to_string(),
            s.departure.to_string(),
            s.requested.to_string(),
            s.delivered.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn write_summary_json(result: &SimResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&Summary::of(result))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
