//! Pilot-to-current response of an EV battery.
//!
//! The pilot is only an upper bound: the vehicle draws at most its own
//! limit, and a two-stage battery tapers linearly in state of charge once it
//! passes `tail_start_soc`.

use serde::{Deserialize, Serialize};

use crate::workload::Session;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BatteryModel {
    Ideal,
    TwoStage { tail_start_soc: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    /// Amp-periods the battery can absorb in total.
    pub capacity: f64,
    /// Amp-periods delivered so far.
    pub charge: f64,
    pub max_current: f64,
    pub model: BatteryModel,
}

impl BatteryState {
    pub fn new(capacity: f64, max_current: f64, model: BatteryModel) -> Result<Self> {
        if !(capacity > 0.0) || !(max_current > 0.0) {
            return Err(Error::InvalidArgument(
                "battery capacity and max current must be positive".into(),
            ));
        }
        if let BatteryModel::TwoStage { tail_start_soc } = model {
            if !(tail_start_soc > 0.0 && tail_start_soc < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "tail start {tail_start_soc} outside (0, 1)"
                )));
            }
        }
        Ok(BatteryState {
            capacity,
            charge: 0.0,
            max_current,
            model,
        })
    }

    pub fn soc(&self) -> f64 {
        self.charge / self.capacity
    }

    pub fn remaining(&self) -> f64 {
        (self.capacity - self.charge).max(0.0)
    }

    /// Current the battery accepts regardless of the pilot.
    pub fn current_bound(&self) -> f64 {
        match self.model {
            BatteryModel::Ideal => self.max_current,
            BatteryModel::TwoStage { tail_start_soc } => {
                let soc = self.soc();
                if soc <= tail_start_soc {
                    self.max_current
                } else {
                    self.max_current * ((1.0 - soc) / (1.0 - tail_start_soc)).max(0.0)
                }
            }
        }
    }

    /// Apply `pilot` for `period_length` periods; returns the drawn current.
    pub fn response(&mut self, pilot: f64, period_length: f64) -> Result<f64> {
        if pilot < 0.0 || pilot.is_nan() {
            return Err(Error::InvalidArgument(format!("negative pilot {pilot}")));
        }
        let draw = pilot
            .min(self.current_bound())
            .min(self.remaining() / period_length)
            .max(0.0);
        self.charge = (self.charge + draw * period_length).min(self.capacity);
        Ok(draw)
    }
}

/// Battery sized to a session so its final `1 − tail_start_soc` fraction of
/// the request falls in the tail (empty at arrival, capacity = request).
pub fn fit_to_session(
    session: &Session,
    max_current: f64,
    model: BatteryModel,
) -> Result<BatteryState> {
    BatteryState::new(session.requested_energy, max_current, model)
}
