//! Assembly of the per-step optimization problem.

use crate::infra::{ChargingNetwork, ConstraintMode};
use crate::solver::{
    ConvexProgram, EpigraphTerm, LinExpr, LinearConstraint, NormTerm, SocConstraint,
};
use crate::{Error, Result};

use super::utility::{SignalContext, UtilityComponent, UtilityConfig};
use super::EvState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    /// Number of periods `T` in the horizon.
    pub horizon: usize,
    /// Discrete pilots: adds the first-period minimum-rate constraint.
    pub quantized: bool,
    pub constraint_mode: ConstraintMode,
    /// Subtracted from every network limit so that solver tolerance cannot
    /// push a solution over the true limit.
    pub limit_margin: f64,
}

/// A built program plus the bookkeeping needed to read its solution.
#[derive(Debug, Clone)]
pub struct OptProblem {
    pub program: ConvexProgram,
    /// `vars[i][t]`: variable of EV `i` in horizon period `t`; `None` when
    /// the rate is fixed at zero (after departure or with a zero bound).
    pub vars: Vec<Vec<Option<usize>>>,
    /// `(network constraint, absolute period)` of each cone.
    pub cone_keys: Vec<(usize, usize)>,
    pub start: usize,
    pub horizon: usize,
    /// Auxiliary net-load variable per horizon period (load variation only).
    pub net_load_vars: Vec<usize>,
    /// `L(t) − G(t)` per horizon period, as used by the program.
    pub net_exogenous: Vec<f64>,
}

impl OptProblem {
    /// Rate matrix `[ev][t]` from a solution vector, clipped into the box.
    pub fn rates(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.vars
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| match v {
                        Some(j) => x[*j].clamp(self.program.lower[*j], self.program.upper[*j]),
                        None => 0.0,
                    })
                    .collect()
            })
            .collect()
    }

    /// Program variables for a rate matrix `[ev][t]` (the inverse of [`rates`](Self::rates)).
    pub fn embed(&self, rates: &[Vec<f64>]) -> Vec<f64> {
        let mut x = vec![0.0; self.program.n];
        let mut totals = vec![0.0; self.horizon];
        for (row, r) in self.vars.iter().zip(rates) {
            for (t, v) in row.iter().enumerate() {
                let value = r.get(t).copied().unwrap_or(0.0);
                totals[t] += value;
                if let Some(j) = v {
                    x[*j] = value;
                }
            }
        }
        for (t, &j) in self.net_load_vars.iter().enumerate() {
            x[j] = totals[t % self.horizon] + self.net_exogenous[t % self.horizon];
        }
        x
    }
}

/// Pilot bound `r̄_i` of an EV: hardware maximum capped by rampdown.
pub fn upper_bound(ev: &EvState, network: &ChargingNetwork) -> f64 {
    network.evses[ev.evse_index]
        .max_pilot
        .min(ev.pilot_upper_bound)
        .max(0.0)
}

/// Build the concave program for the EVs in `evs` at period `k`.
pub fn build_opt(
    evs: &[&EvState],
    network: &ChargingNetwork,
    utility: &UtilityConfig,
    ctx: &SignalContext,
    k: usize,
    opts: &BuildOptions,
) -> Result<OptProblem> {
    if opts.horizon == 0 {
        return Err(Error::InvalidArgument(
            "horizon must be at least one period".into(),
        ));
    }
    if evs.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot build a program without active EVs".into(),
        ));
    }
    utility.validate()?;
    let horizon = opts.horizon;

    let mut vars = Vec::with_capacity(evs.len());
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut energy_caps = Vec::with_capacity(evs.len());
    let mut n = 0;
    for ev in evs {
        let ub = upper_bound(ev, network);
        let len = ev.remaining_duration(k).min(horizon);
        // EVs not yet plugged in (offline problems only) start later.
        let first = ev.arrival.saturating_sub(k).min(len);
        let min_first = if opts.quantized {
            let m = network.evses[ev.evse_index].rate_set(false).min_nonzero();
            if m <= ub {
                m
            } else {
                0.0
            }
        } else {
            0.0
        };
        let mut row = vec![None; horizon];
        if ub > 0.0 {
            for (t, slot) in row.iter_mut().enumerate().take(len).skip(first) {
                *slot = Some(n);
                lower.push(if t == 0 { min_first } else { 0.0 });
                upper.push(ub);
                n += 1;
            }
        }
        // An EV whose remaining demand is below its minimum pilot may still
        // receive that minimum in the first period.
        energy_caps.push(ev.remaining_energy.max(if first == 0 && len > 0 {
            min_first
        } else {
            0.0
        }));
        vars.push(row);
    }

    let mut program = ConvexProgram::new(n, 0.0, 0.0);
    program.lower = lower;
    program.upper = upper;

    // (5c) energy limits
    for (row, &cap) in vars.iter().zip(&energy_caps) {
        let terms: Vec<(usize, f64)> = row.iter().flatten().map(|&j| (j, 1.0)).collect();
        if !terms.is_empty() {
            program.linear_ineqs.push(LinearConstraint {
                row: terms,
                rhs: cap,
            });
        }
    }

    // network constraints
    let mut cone_keys = Vec::new();
    for t in 0..horizon {
        let abs_t = k + t;
        for (l, c) in network.constraints.iter().enumerate() {
            let mut re = Vec::new();
            let mut im = Vec::new();
            let mut abs_terms = Vec::new();
            let mut worst = 0.0;
            for (i, ev) in evs.iter().enumerate() {
                let Some(j) = vars[i][t] else { continue };
                let a = network.effective_coefficient(l, ev.evse_index);
                if a.norm() == 0.0 {
                    continue;
                }
                re.push((j, a.re));
                im.push((j, a.im));
                abs_terms.push((j, a.norm()));
                worst += a.norm() * program.upper[j];
            }
            if abs_terms.is_empty() {
                continue;
            }
            let bg = c.background_at(abs_t);
            let limit = (c.limit.at(abs_t) - opts.limit_margin).max(0.0);
            if worst + bg.norm() <= limit {
                continue;
            }
            match opts.constraint_mode {
                ConstraintMode::Affine => program.linear_ineqs.push(LinearConstraint {
                    row: abs_terms,
                    rhs: limit - bg.norm(),
                }),
                ConstraintMode::Soc => {
                    program.soc_constraints.push(SocConstraint {
                        re,
                        im,
                        offset_re: bg.re,
                        offset_im: bg.im,
                        limit,
                    });
                    cone_keys.push((l, abs_t));
                }
            }
        }
    }

    // objective
    let kwh_per_ap = ctx.time_base.kwh_per_amp_period();
    let kw_per_amp = ctx.time_base.kw_per_amp();
    let period_terms = |t: usize| -> Vec<(usize, f64)> {
        vars.iter()
            .filter_map(|row| row[t])
            .map(|j| (j, 1.0))
            .collect()
    };
    let mut net_load_vars = Vec::new();
    for wc in &utility.components {
        let w = wc.weight;
        match &wc.component {
            UtilityComponent::QuickCharge => {
                for row in &vars {
                    for (t, v) in row.iter().enumerate() {
                        if let Some(j) = v {
                            program.linear_cost[*j] += w * (horizon - t) as f64 / horizon as f64;
                        }
                    }
                }
            }
            UtilityComponent::EnergyCost { revenue_per_kwh } => {
                for row in &vars {
                    for (t, v) in row.iter().enumerate() {
                        if let Some(j) = v {
                            program.linear_cost[*j] +=
                                w * (revenue_per_kwh - ctx.price(t)) * kwh_per_ap;
                        }
                    }
                }
            }
            UtilityComponent::DemandCharge => {
                let weight = w * ctx.demand_charge_proxy * kw_per_amp;
                if weight > 0.0 {
                    let mut exprs: Vec<LinExpr> = (0..horizon)
                        .map(|t| LinExpr::new(period_terms(t), ctx.net_exogenous(t)))
                        .collect();
                    exprs.push(LinExpr::new(Vec::new(), ctx.prior_peak_kw / kw_per_amp));
                    exprs.push(LinExpr::new(Vec::new(), ctx.peak_hint_kw / kw_per_amp));
                    program.epigraph_terms.push(EpigraphTerm { weight, exprs });
                }
            }
            UtilityComponent::LoadVariation => {
                // auxiliary N(t) = Σ r(t) + L(t) − G(t), penalized quadratically
                for t in 0..horizon {
                    let aux = program.n;
                    net_load_vars.push(aux);
                    program.n += 1;
                    program.linear_cost.push(0.0);
                    program.quad_cost.push(w);
                    program.lower.push(f64::NEG_INFINITY);
                    program.upper.push(f64::INFINITY);
                    let mut row = period_terms(t);
                    row.push((aux, -1.0));
                    program.linear_eqs.push(LinearConstraint {
                        row,
                        rhs: -ctx.net_exogenous(t),
                    });
                }
            }
            UtilityComponent::EqualShare => {
                for d in program.quad_cost.iter_mut().take(n) {
                    *d += w;
                }
            }
            UtilityComponent::NonCompletion { p } => {
                let shortfalls: Vec<LinExpr> = vars
                    .iter()
                    .zip(evs)
                    .map(|(row, ev)| {
                        LinExpr::new(
                            row.iter().flatten().map(|&j| (j, 1.0)).collect(),
                            -ev.remaining_energy,
                        )
                    })
                    .collect();
                if *p == 1.0 {
                    for e in shortfalls {
                        let neg = LinExpr::new(
                            e.terms.iter().map(|&(j, c)| (j, -c)).collect(),
                            -e.constant,
                        );
                        program.epigraph_terms.push(EpigraphTerm {
                            weight: w,
                            exprs: vec![e, neg],
                        });
                    }
                } else {
                    program.norm_terms.push(NormTerm {
                        weight: w,
                        exprs: shortfalls,
                    });
                }
            }
        }
    }

    Ok(OptProblem {
        program,
        vars,
        cone_keys,
        start: k,
        horizon,
        net_load_vars,
        net_exogenous: (0..horizon).map(|t| ctx.net_exogenous(t)).collect(),
    })
}
