//! Objective components and their weights.

use serde::{Deserialize, Serialize};

use crate::workload::TimeBase;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "component", rename_all = "snake_case")]
pub enum UtilityComponent {
    /// Reward charging earlier in the horizon.
    QuickCharge,
    /// Revenue minus time-of-use energy cost, in dollars.
    EnergyCost { revenue_per_kwh: f64 },
    /// Demand charge proxy applied to the horizon peak, in dollars.
    DemandCharge,
    /// Penalize the squared net load.
    LoadVariation,
    /// Penalize squared rates, promoting equal sharing.
    EqualShare,
    /// Penalize unmet energy in the `p`-norm (`p` ∈ {1, 2}).
    NonCompletion { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedComponent {
    #[serde(flatten)]
    pub component: UtilityComponent,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityConfig {
    pub components: Vec<WeightedComponent>,
}

impl UtilityConfig {
    pub fn new(components: Vec<(UtilityComponent, f64)>) -> Self {
        UtilityConfig {
            components: components
                .into_iter()
                .map(|(component, weight)| WeightedComponent { component, weight })
                .collect(),
        }
    }

    /// Deliver energy as quickly as possible: `u_QC + 10⁻¹² u_ES`.
    pub fn asa_qc() -> Self {
        UtilityConfig::new(vec![
            (UtilityComponent::QuickCharge, 1.0),
            (UtilityComponent::EqualShare, 1e-12),
        ])
    }

    /// Profit maximization: `u_EC + u_DC + 10⁻⁴ u_QC + 10⁻¹² u_ES`.
    pub fn asa_pm(revenue_per_kwh: f64) -> Self {
        UtilityConfig::new(vec![
            (UtilityComponent::EnergyCost { revenue_per_kwh }, 1.0),
            (UtilityComponent::DemandCharge, 1.0),
            (UtilityComponent::QuickCharge, 1e-4),
            (UtilityComponent::EqualShare, 1e-12),
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidArgument(
                "utility needs at least one component".into(),
            ));
        }
        for c in &self.components {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "utility weight {} must be positive",
                    c.weight
                )));
            }
            match c.component {
                UtilityComponent::NonCompletion { p } if p != 1.0 && p != 2.0 => {
                    return Err(Error::InvalidArgument(format!(
                        "non-completion norm p = {p} unsupported (use 1 or 2)"
                    )));
                }
                UtilityComponent::EnergyCost { revenue_per_kwh } if !(revenue_per_kwh >= 0.0) => {
                    return Err(Error::InvalidArgument(
                        "revenue per kWh must be non-negative".into(),
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn has(&self, pred: impl Fn(&UtilityComponent) -> bool) -> bool {
        self.components.iter().any(|c| pred(&c.component))
    }
}

/// Exogenous signals over the optimization horizon (index 0 = current period).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalContext {
    /// Energy price `c(t)` in $/kWh; the last entry is reused past the end.
    pub prices: Vec<f64>,
    /// Uncontrolled site load `L(t)` in amps.
    #[serde(default)]
    pub other_load: Vec<f64>,
    /// On-site generation `G(t)` in amps.
    #[serde(default)]
    pub generation: Vec<f64>,
    /// Demand charge proxy `P̂` in $/kW.
    #[serde(default)]
    pub demand_charge_proxy: f64,
    /// Highest metered peak so far in the billing period (`q0`), kW.
    #[serde(default)]
    pub prior_peak_kw: f64,
    /// Peak hint `q'`, kW.
    #[serde(default)]
    pub peak_hint_kw: f64,
    pub time_base: TimeBase,
}

impl SignalContext {
    /// Context with no prices or peaks (enough for QC/ES/LV/NC objectives).
    pub fn neutral(time_base: TimeBase) -> Self {
        SignalContext {
            prices: Vec::new(),
            other_load: Vec::new(),
            generation: Vec::new(),
            demand_charge_proxy: 0.0,
            prior_peak_kw: 0.0,
            peak_hint_kw: 0.0,
            time_base,
        }
    }

    fn at(v: &[f64], t: usize) -> f64 {
        v.get(t).or(v.last()).copied().unwrap_or(0.0)
    }

    pub fn price(&self, t: usize) -> f64 {
        Self::at(&self.prices, t)
    }

    /// `L(t) − G(t)` in amps.
    pub fn net_exogenous(&self, t: usize) -> f64 {
        Self::at(&self.other_load, t) - Self::at(&self.generation, t)
    }
}
