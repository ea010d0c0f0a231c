//! The perfect-information benchmark: one program over the whole horizon
//! with every session known in advance.

use std::collections::HashMap;

use crate::infra::ChargingNetwork;
use crate::scheduler::{
    build_opt, BuildOptions, EvState, OptProblem, SignalContext, UtilityConfig,
};
use crate::solver::{self, Solution, Status};
use crate::workload::Session;
use crate::{Error, Result};

use super::{simulate, validate_sessions, Controller, SimConfig, SimResult};

/// Offline solution replayed through the simulator.
#[derive(Debug, Clone)]
pub struct OfflineResult {
    pub result: SimResult,
    /// Optimal objective value of the offline program.
    pub objective: f64,
    pub status: Status,
}

/// The offline program for `sessions`, with each EV's variables spanning
/// its arrival to its departure.
pub fn offline_problem(
    network: &ChargingNetwork,
    sessions: &[Session],
    utility: &UtilityConfig,
    config: &SimConfig,
) -> Result<Option<(OptProblem, Vec<String>)>> {
    validate_sessions(network, sessions)?;
    let horizon = sessions.iter().map(|s| s.departure).max().unwrap_or(0);
    if horizon == 0 {
        return Ok(None);
    }
    let needed: usize = sessions.iter().map(|s| s.duration()).sum();
    if needed > config.offline_variable_budget {
        return Err(Error::HorizonTooLarge {
            needed,
            budget: config.offline_variable_budget,
        });
    }
    let mut evs = Vec::with_capacity(sessions.len());
    for s in sessions {
        evs.push(EvState::from_session(s, network)?);
    }
    let refs: Vec<&EvState> = evs.iter().collect();

    let calendar = config.calendar();
    let mut ctx = SignalContext::neutral(config.time_base);
    if let Some(tariff) = config.effective_tariff(horizon) {
        ctx.prices = (0..horizon).map(|t| calendar.price(&tariff, t)).collect();
        // the whole billing period is in view, so the full charge applies
        ctx.demand_charge_proxy = tariff.demand_charge_rate;
    }
    let opts = BuildOptions {
        horizon,
        quantized: false,
        constraint_mode: config.constraint_mode,
        limit_margin: config.solver.tol,
    };
    let problem = build_opt(&refs, network, utility, &ctx, 0, &opts)?;
    Ok(Some((
        problem,
        evs.into_iter().map(|e| e.session_id).collect(),
    )))
}

/// Solve the offline problem and replay its rates open loop with ideal batteries.
pub fn offline_optimal(
    network: &ChargingNetwork,
    sessions: &[Session],
    utility: &UtilityConfig,
    config: &SimConfig,
) -> Result<OfflineResult> {
    if !config.scenario.continuous_evse {
        return Err(Error::InvalidArgument(
            "the offline optimum is only defined for continuous EVSEs".into(),
        ));
    }
    let mut replay = config.clone();
    replay.scenario.ideal_battery = true;
    replay.scenario.perfect_information = true;

    let Some((problem, ids)) = offline_problem(network, sessions, utility, config)? else {
        let result = simulate(
            network,
            sessions,
            Controller::OpenLoop(HashMap::new()),
            "optimal",
            true,
            &replay,
        )?;
        return Ok(OfflineResult {
            result,
            objective: 0.0,
            status: Status::Optimal,
        });
    };
    let solution: Solution = solver::solve(&problem.program, &config.solver)?;
    if solution.status == Status::Infeasible {
        return Err(Error::InvalidProgram(
            "offline program is infeasible".into(),
        ));
    }
    let rates: HashMap<String, Vec<f64>> =
        ids.into_iter().zip(problem.rates(&solution.x)).collect();
    let result = simulate(
        network,
        sessions,
        Controller::OpenLoop(rates),
        "optimal",
        true,
        &replay,
    )?;
    Ok(OfflineResult {
        result,
        objective: solution.objective,
        status: solution.status,
    })
}

/// Value of the offline objective at the currents a run actually drew.
///
/// Offline and online runs are scored on the same program, so the offline
/// optimum bounds this value from above whenever the drawn currents are
/// feasible for it.
pub fn realized_objective(
    network: &ChargingNetwork,
    sessions: &[Session],
    result: &SimResult,
    utility: &UtilityConfig,
    config: &SimConfig,
) -> Result<f64> {
    let Some((problem, ids)) = offline_problem(network, sessions, utility, config)? else {
        return Ok(0.0);
    };
    let by_id: HashMap<&str, usize> = result
        .sessions
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let measured = result.measured_matrix();
    let rates: Vec<Vec<f64>> = ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|&i| measured[i].clone())
                .unwrap_or_default()
        })
        .collect();
    Ok(problem.program.objective(&problem.embed(&rates)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infra::{Evse, Limit, NetworkConstraint};
    use crate::simulator::{run_algorithm, Algorithm};
    use crate::workload::TimeBase;
    use num_complex::Complex64;

    fn line(n: usize, limit: f64) -> ChargingNetwork {
        let evses = (0..n)
            .map(|i| Evse::stepped(format!("e{i}"), 0.0, 6.0, 32.0, 1.0))
            .collect();
        let c = NetworkConstraint {
            id: "line".into(),
            coefficients: vec![Complex64::new(1.0, 0.0); n],
            limit: Limit::Constant(limit),
            background_load: vec![],
        };
        ChargingNetwork::new(evses, vec![c], 208.0).unwrap()
    }

    fn session(id: &str, evse: &str, arrival: usize, departure: usize, energy: f64) -> Session {
        Session {
            id: id.into(),
            evse_id: evse.into(),
            arrival,
            departure,
            requested_energy: energy,
            original_kwh: energy * TimeBase::default().kwh_per_amp_period(),
        }
    }

    #[test]
    fn single_ev_matches_online() {
        let net = line(1, 20.0);
        let s = vec![session("a", "e0", 3, 12, 150.0)];
        let config = SimConfig::default();
        let off = offline_optimal(&net, &s, &UtilityConfig::asa_qc(), &config).unwrap();
        let on = run_algorithm(&net, &s, Algorithm::AsaQc, &config).unwrap();
        for (a, b) in off.result.sessions[0]
            .measured
            .iter()
            .zip(&on.sessions[0].measured)
        {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn empty_sessions() {
        let off = offline_optimal(
            &line(1, 20.0),
            &[],
            &UtilityConfig::asa_qc(),
            &SimConfig::default(),
        )
        .unwrap();
        assert_eq!(off.objective, 0.0);
        assert_eq!(off.result.periods, 0);
    }

    #[test]
    fn dominates_online_realized_objective() {
        let net = line(3, 40.0);
        let s = vec![
            session("a", "e0", 0, 10, 200.0),
            session("b", "e1", 2, 8, 150.0),
            session("c", "e2", 5, 14, 180.0),
        ];
        let config = SimConfig::default();
        let u = UtilityConfig::asa_qc();
        let off = offline_optimal(&net, &s, &u, &config).unwrap();
        for alg in [
            Algorithm::AsaQc,
            Algorithm::Llf,
            Algorithm::Edf,
            Algorithm::Rr,
        ] {
            let on = run_algorithm(&net, &s, alg, &config).unwrap();
            let value = realized_objective(&net, &s, &on, &u, &config).unwrap();
            assert!(
                off.objective >= value - 1e-3 * (1.0 + value.abs()),
                "{alg}: {} < {value}",
                off.objective
            );
        }
        let replayed = realized_objective(&net, &s, &off.result, &u, &config).unwrap();
        assert!((replayed - off.objective).abs() < 1e-3 * (1.0 + off.objective.abs()));
    }

    #[test]
    fn budget_enforced() {
        let config = SimConfig {
            offline_variable_budget: 5,
            ..SimConfig::default()
        };
        let s = vec![session("a", "e0", 0, 10, 20.0)];
        assert!(matches!(
            offline_optimal(&line(1, 20.0), &s, &UtilityConfig::asa_qc(), &config),
            Err(Error::HorizonTooLarge {
                needed: 10,
                budget: 5
            })
        ));
    }

    #[test]
    fn quantized_scenario_rejected() {
        let config = SimConfig {
            scenario: crate::simulator::Scenario::III,
            ..SimConfig::default()
        };
        assert!(offline_optimal(&line(1, 20.0), &[], &UtilityConfig::asa_qc(), &config).is_err());
    }
}
