//! Electrical infrastructure: EVSEs, the constraint matrix mapping EVSE
//! currents onto network currents, and feasibility checks.
//!
//! Every EVSE `i` draws a phasor `r_i · e^{jφ_i}`. A network constraint `l`
//! bounds the magnitude of `Σ_i A_li r_i e^{jφ_i} + L_l(t)` by `c_lt`, where
//! `A_li` is a complex coefficient and `L_l(t)` the uncontrolled load through
//! the same resource. The affine form `Σ_i |A_li| r_i + |L_l(t)| ≤ c_lt` is a
//! conservative restriction of the cone constraint for non-negative rates.

use std::collections::HashSet;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub mod presets;

/// How network constraints are enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintMode {
    /// Exact magnitude (second-order cone) constraints.
    #[default]
    Soc,
    /// Conservative affine constraints.
    Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evse {
    pub id: String,
    /// Largest pilot the EVSE can signal, in amps.
    pub max_pilot: f64,
    /// Discrete pilot values supported by the hardware, ascending, including 0.
    pub allowable_rates: Vec<f64>,
    #[serde(default = "default_min_rate")]
    pub min_nonzero_rate: f64,
    /// Phase angle of the EVSE current in degrees.
    pub phase_angle: f64,
    /// When set, any pilot in `{0} ∪ [min_nonzero_rate, max_pilot]` is allowed.
    #[serde(default)]
    pub continuous: bool,
}

fn default_min_rate() -> f64 {
    6.0
}

impl Evse {
    /// EVSE supporting every integer step `step` from `min_nonzero` up to `max`.
    pub fn stepped(
        id: impl Into<String>,
        phase_angle: f64,
        min_nonzero: f64,
        max: f64,
        step: f64,
    ) -> Self {
        let mut rates = vec![0.0];
        let mut r = min_nonzero;
        while r <= max + 1e-9 {
            rates.push(r);
            r += step;
        }
        Evse {
            id: id.into(),
            max_pilot: max,
            allowable_rates: rates,
            min_nonzero_rate: min_nonzero,
            phase_angle,
            continuous: false,
        }
    }

    /// EVSE with an explicit discrete pilot set (must contain 0).
    pub fn discrete(id: impl Into<String>, phase_angle: f64, rates: &[f64]) -> Self {
        let mut allowable: Vec<f64> = rates.to_vec();
        allowable.sort_by(f64::total_cmp);
        let max = allowable.last().copied().unwrap_or(0.0);
        let min_nonzero = allowable.iter().copied().find(|&r| r > 0.0).unwrap_or(0.0);
        Evse {
            id: id.into(),
            max_pilot: max,
            allowable_rates: allowable,
            min_nonzero_rate: min_nonzero,
            phase_angle,
            continuous: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidNetwork(format!("EVSE `{}`: {msg}", self.id)));
        if !(self.max_pilot > 0.0) {
            return err(format!("max_pilot {} must be positive", self.max_pilot));
        }
        if !(-180.0..=180.0).contains(&self.phase_angle) {
            return err(format!(
                "phase angle {} outside [-180, 180]",
                self.phase_angle
            ));
        }
        if !self.allowable_rates.contains(&0.0) {
            return err("allowable rates must contain 0".into());
        }
        if self.allowable_rates.windows(2).any(|w| w[0] >= w[1]) {
            return err("allowable rates must be strictly ascending".into());
        }
        for &r in &self.allowable_rates {
            if r < 0.0 || r > self.max_pilot + 1e-9 {
                return err(format!(
                    "allowable rate {r} outside [0, {}]",
                    self.max_pilot
                ));
            }
            if r > 0.0 && r < self.min_nonzero_rate - 1e-9 {
                return err(format!(
                    "allowable rate {r} below minimum nonzero rate {}",
                    self.min_nonzero_rate
                ));
            }
        }
        Ok(())
    }

    /// Unit phasor `e^{jφ}` of this EVSE.
    pub fn phasor(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.phase_angle.to_radians())
    }

    /// The set of pilots usable under the given scenario.
    ///
    /// `continuous_override` models hardware that accepts any pilot between 0
    /// and the maximum with no minimum-rate rule.
    pub fn rate_set(&self, continuous_override: bool) -> RateSet {
        if continuous_override {
            RateSet::Interval {
                min_nonzero: 0.0,
                max: self.max_pilot,
            }
        } else if self.continuous {
            RateSet::Interval {
                min_nonzero: self.min_nonzero_rate,
                max: self.max_pilot,
            }
        } else {
            RateSet::Discrete(self.allowable_rates.clone())
        }
    }
}

/// Allowed pilot values of one EVSE (`ρ_i`).
#[derive(Debug, Clone, PartialEq)]
pub enum RateSet {
    /// `{0} ∪ [min_nonzero, max]`.
    Interval { min_nonzero: f64, max: f64 },
    /// Ascending discrete values, including 0.
    Discrete(Vec<f64>),
}

impl RateSet {
    pub fn is_continuous(&self) -> bool {
        matches!(self, RateSet::Interval { .. })
    }

    pub fn max(&self) -> f64 {
        match self {
            RateSet::Interval { max, .. } => *max,
            RateSet::Discrete(v) => v.last().copied().unwrap_or(0.0),
        }
    }

    /// Smallest nonzero allowed value (`min(ρ \ {0})`).
    pub fn min_nonzero(&self) -> f64 {
        match self {
            RateSet::Interval { min_nonzero, .. } => *min_nonzero,
            RateSet::Discrete(v) => v.iter().copied().find(|&r| r > 0.0).unwrap_or(0.0),
        }
    }

    pub fn contains(&self, r: f64) -> bool {
        match self {
            RateSet::Interval { min_nonzero, max } => {
                r == 0.0 || (r >= *min_nonzero - 1e-9 && r <= *max + 1e-9)
            }
            RateSet::Discrete(v) => v.iter().any(|&x| (x - r).abs() <= 1e-9),
        }
    }

    /// Largest allowed value not exceeding `r`.
    pub fn floor(&self, r: f64) -> f64 {
        match self {
            RateSet::Interval { min_nonzero, max } => {
                if r < *min_nonzero - 1e-9 || r <= 0.0 {
                    0.0
                } else {
                    r.clamp(*min_nonzero, *max)
                }
            }
            RateSet::Discrete(v) => v
                .iter()
                .copied()
                .rev()
                .find(|&x| x <= r + 1e-9)
                .unwrap_or(0.0),
        }
    }

    /// Smallest allowed value that is at least `r`, if any.
    pub fn ceil(&self, r: f64) -> Option<f64> {
        match self {
            RateSet::Interval { min_nonzero, max } => {
                if r <= 0.0 {
                    Some(0.0)
                } else if r > *max + 1e-9 {
                    None
                } else {
                    Some(r.max(*min_nonzero))
                }
            }
            RateSet::Discrete(v) => v.iter().copied().find(|&x| x >= r - 1e-9),
        }
    }

    /// Next allowed value strictly above `r`. For intervals the step is `step`.
    pub fn next_above(&self, r: f64, step: f64) -> Option<f64> {
        match self {
            RateSet::Interval { min_nonzero, max } => {
                if r >= *max - 1e-9 {
                    None
                } else if r < *min_nonzero {
                    Some(*min_nonzero)
                } else {
                    Some((r + step).min(*max))
                }
            }
            RateSet::Discrete(v) => v.iter().copied().find(|&x| x > r + 1e-9),
        }
    }

    /// Allowed values not above `cap`, descending. Empty for intervals.
    pub fn values_desc(&self, cap: f64) -> Vec<f64> {
        match self {
            RateSet::Interval { .. } => Vec::new(),
            RateSet::Discrete(v) => v
                .iter()
                .copied()
                .rev()
                .filter(|&x| x <= cap + 1e-9)
                .collect(),
        }
    }
}

/// Per-constraint capacity, constant or per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Limit {
    Constant(f64),
    PerPeriod(Vec<f64>),
}

impl Limit {
    /// Capacity at period `t`; periods past the end of a vector reuse its last entry.
    pub fn at(&self, t: usize) -> f64 {
        match self {
            Limit::Constant(c) => *c,
            Limit::PerPeriod(v) => v.get(t).or(v.last()).copied().unwrap_or(0.0),
        }
    }

    fn min(&self) -> f64 {
        match self {
            Limit::Constant(c) => *c,
            Limit::PerPeriod(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn scaled(&self, factor: f64) -> Limit {
        match self {
            Limit::Constant(c) => Limit::Constant(c * factor),
            Limit::PerPeriod(v) => Limit::PerPeriod(v.iter().map(|c| c * factor).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConstraint {
    pub id: String,
    /// Row `A_l·` of the constraint matrix, one entry per EVSE.
    #[serde(with = "crate::serde_complex::vec")]
    pub coefficients: Vec<Complex64>,
    pub limit: Limit,
    /// Uncontrolled load `L_l(t)` per period; empty means none.
    #[serde(
        default,
        with = "crate::serde_complex::vec",
        skip_serializing_if = "Vec::is_empty"
    )]
    pub background_load: Vec<Complex64>,
}

impl NetworkConstraint {
    pub fn background_at(&self, t: usize) -> Complex64 {
        self.background_load
            .get(t)
            .or(self.background_load.last())
            .copied()
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingNetwork {
    pub evses: Vec<Evse>,
    pub constraints: Vec<NetworkConstraint>,
    #[serde(default = "default_voltage")]
    pub nominal_voltage: f64,
}

fn default_voltage() -> f64 {
    208.0
}

impl ChargingNetwork {
    pub fn new(
        evses: Vec<Evse>,
        constraints: Vec<NetworkConstraint>,
        nominal_voltage: f64,
    ) -> Result<Self> {
        let network = ChargingNetwork {
            evses,
            constraints,
            nominal_voltage,
        };
        network.validate()?;
        Ok(network)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for evse in &self.evses {
            evse.validate()?;
            if !ids.insert(evse.id.as_str()) {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate EVSE id `{}`",
                    evse.id
                )));
            }
        }
        let mut cids = HashSet::new();
        for c in &self.constraints {
            if !cids.insert(c.id.as_str()) {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate constraint id `{}`",
                    c.id
                )));
            }
            if c.coefficients.len() != self.evses.len() {
                return Err(Error::InvalidNetwork(format!(
                    "constraint `{}` has {} coefficients for {} EVSEs",
                    c.id,
                    c.coefficients.len(),
                    self.evses.len()
                )));
            }
            if !(c.limit.min() >= 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "constraint `{}` has a negative limit",
                    c.id
                )));
            }
        }
        if !(self.nominal_voltage > 0.0) {
            return Err(Error::InvalidNetwork(
                "nominal voltage must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn evse_index(&self, id: &str) -> Option<usize> {
        self.evses.iter().position(|e| e.id == id)
    }

    pub fn constraint_index(&self, id: &str) -> Option<usize> {
        self.constraints.iter().position(|c| c.id == id)
    }

    /// Effective complex coefficient `A_li e^{jφ_i}` of EVSE `i` in constraint `l`.
    pub fn effective_coefficient(&self, l: usize, i: usize) -> Complex64 {
        self.constraints[l].coefficients[i] * self.evses[i].phasor()
    }

    fn check_len(&self, rates: &[f64]) -> Result<()> {
        if rates.len() != self.evses.len() {
            return Err(Error::RateLength {
                expected: self.evses.len(),
                got: rates.len(),
            });
        }
        Ok(())
    }

    /// `Σ_i A_li r_i e^{jφ_i} + L_l(t)` for constraint `constraint_id`.
    pub fn aggregate_phasor(
        &self,
        constraint_id: &str,
        rates: &[f64],
        t: usize,
    ) -> Result<Complex64> {
        let l = self
            .constraint_index(constraint_id)
            .ok_or_else(|| Error::UnknownConstraint(constraint_id.to_string()))?;
        self.check_len(rates)?;
        Ok(self.phasor_at(l, rates, t))
    }

    /// Aggregate phasor of constraint index `l`; `rates` must match the EVSE count.
    pub fn phasor_at(&self, l: usize, rates: &[f64], t: usize) -> Complex64 {
        let c = &self.constraints[l];
        let mut sum = c.background_at(t);
        for (i, (&r, a)) in rates.iter().zip(&c.coefficients).enumerate() {
            if r != 0.0 && *a != Complex64::default() {
                sum += a * self.evses[i].phasor() * r;
            }
        }
        sum
    }

    /// Affine aggregate `Σ_i |A_li| r_i + |L_l(t)|` of constraint index `l`.
    pub fn affine_at(&self, l: usize, rates: &[f64], t: usize) -> f64 {
        let c = &self.constraints[l];
        c.background_at(t).norm()
            + rates
                .iter()
                .zip(&c.coefficients)
                .map(|(&r, a)| a.norm() * r)
                .sum::<f64>()
    }

    pub fn check_soc_feasible(&self, rates: &[f64], t: usize, tol: f64) -> Result<Vec<bool>> {
        self.check_len(rates)?;
        Ok((0..self.constraints.len())
            .map(|l| self.phasor_at(l, rates, t).norm() <= self.constraints[l].limit.at(t) + tol)
            .collect())
    }

    pub fn check_affine_feasible(&self, rates: &[f64], t: usize, tol: f64) -> Result<Vec<bool>> {
        self.check_len(rates)?;
        Ok((0..self.constraints.len())
            .map(|l| self.affine_at(l, rates, t) <= self.constraints[l].limit.at(t) + tol)
            .collect())
    }

    /// True when every constraint holds under `mode`.
    pub fn is_feasible(&self, rates: &[f64], t: usize, tol: f64, mode: ConstraintMode) -> bool {
        debug_assert_eq!(rates.len(), self.evses.len());
        (0..self.constraints.len()).all(|l| {
            let load = match mode {
                ConstraintMode::Soc => self.phasor_at(l, rates, t).norm(),
                ConstraintMode::Affine => self.affine_at(l, rates, t),
            };
            load <= self.constraints[l].limit.at(t) + tol
        })
    }

    /// Largest amount by which any constraint is exceeded (0 when feasible).
    pub fn max_violation(&self, rates: &[f64], t: usize, mode: ConstraintMode) -> f64 {
        (0..self.constraints.len())
            .map(|l| {
                let load = match mode {
                    ConstraintMode::Soc => self.phasor_at(l, rates, t).norm(),
                    ConstraintMode::Affine => self.affine_at(l, rates, t),
                };
                (load - self.constraints[l].limit.at(t)).max(0.0)
            })
            .fold(0.0, f64::max)
    }

    /// Same network with every constraint whose id starts with `prefix` rescaled.
    pub fn with_scaled_limits(&self, prefix: &str, factor: f64) -> ChargingNetwork {
        let mut net = self.clone();
        for c in &mut net.constraints {
            if c.id.starts_with(prefix) {
                c.limit = c.limit.scaled(factor);
            }
        }
        net
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let network: ChargingNetwork =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        network.validate()?;
        Ok(network)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
