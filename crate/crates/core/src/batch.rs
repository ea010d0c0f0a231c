//! Many independent simulations at once.
//!
//! Capacity sweeps and algorithm comparisons are embarrassingly parallel:
//! every (capacity, algorithm) pair is its own closed-loop run. [`map`] fans
//! such tasks out over a bounded rayon pool, or runs them one after another
//! with [`Execution::Sequential`] (and always when the crate is built
//! without the `parallel` feature). Results come back in input order either
//! way, so outputs do not depend on the execution mode.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::billing::peak_hint;
use crate::infra::ChargingNetwork;
use crate::scheduler::UtilityConfig;
use crate::simulator::{offline_optimal, run_algorithm, Algorithm, SimConfig, SimResult, Summary};
use crate::workload::Session;
use crate::{Error, Result};

/// How independent tasks are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    /// A rayon pool of `jobs` workers (`None`: one per core).
    Parallel {
        jobs: Option<usize>,
    },
    Sequential,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { jobs: None }
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// `Parallel` with `jobs` workers, or `Sequential` for `Some(1)`.
    pub fn with_jobs(jobs: Option<usize>) -> Self {
        match jobs {
            Some(1) => Execution::Sequential,
            jobs => Execution::Parallel { jobs },
        }
    }
}

/// Apply `f` to every item; the output order matches `items`.
pub fn map<T, R, F>(items: &[T], execution: Execution, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match execution {
        Execution::Sequential => Ok(items.iter().map(f).collect()),
        Execution::Parallel { jobs } => parallel_map(items, jobs, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: &[T], jobs: Option<usize>, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if jobs == Some(0) {
        return Err(Error::InvalidArgument("job count must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: &[T], jobs: Option<usize>, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if jobs == Some(0) {
        return Err(Error::InvalidArgument("job count must be positive".into()));
    }
    log::debug!(
        "built without the `parallel` feature; running {} tasks sequentially",
        items.len()
    );
    Ok(items.iter().map(f).collect())
}

/// One entry of a run table. `algorithm` is `optimal` for the offline
/// benchmark, which always runs with continuous EVSEs and ideal batteries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Entry {
    Online(Algorithm),
    Optimal,
}

impl Entry {
    pub fn name(self) -> &'static str {
        match self {
            Entry::Online(a) => a.name(),
            Entry::Optimal => "optimal",
        }
    }

    fn run(
        self,
        network: &ChargingNetwork,
        sessions: &[Session],
        offline_utility: &UtilityConfig,
        config: &SimConfig,
    ) -> Result<SimResult> {
        match self {
            Entry::Online(a) => run_algorithm(network, sessions, a, config),
            Entry::Optimal => {
                let mut ideal = config.clone();
                ideal.scenario.continuous_evse = true;
                offline_optimal(network, sessions, offline_utility, &ideal).map(|o| o.result)
            }
        }
    }
}

/// Result of one (capacity, algorithm) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub capacity_kva: f64,
    pub summary: Summary,
}

/// Run every entry at every capacity on the network `build(capacity)`.
///
/// The offline entry maximizes the quick-charge utility, which makes its
/// `demand_met` the benchmark for energy delivery.
pub fn sweep_capacity<B>(
    build: B,
    capacities: &[f64],
    entries: &[Entry],
    sessions: &[Session],
    config: &SimConfig,
    execution: Execution,
) -> Result<Vec<SweepPoint>>
where
    B: Fn(f64) -> ChargingNetwork + Sync + Send,
{
    let tasks: Vec<(f64, Entry)> = capacities
        .iter()
        .flat_map(|&c| entries.iter().map(move |&e| (c, e)))
        .collect();
    let utility = UtilityConfig::asa_qc();
    map(&tasks, execution, |&(capacity, entry)| {
        let network = build(capacity);
        entry
            .run(&network, sessions, &utility, config)
            .map(|r| SweepPoint {
                capacity_kva: capacity,
                summary: Summary::of(&r),
            })
    })?
    .into_iter()
    .collect()
}

/// Operator economics of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitRow {
    pub algorithm: String,
    pub profit: f64,
    pub revenue: f64,
    pub energy_cost: f64,
    pub demand_charge: f64,
    pub peak_kw: f64,
    pub demand_met: f64,
}

/// Bill every entry on the same workload. `config.tariff` must be set.
///
/// The offline entry maximizes the profit utility for `config.revenue_per_kwh`.
pub fn compare_profit(
    network: &ChargingNetwork,
    sessions: &[Session],
    entries: &[Entry],
    config: &SimConfig,
    execution: Execution,
) -> Result<Vec<ProfitRow>> {
    if config.tariff.is_none() {
        return Err(Error::InvalidArgument(
            "a profit comparison needs a tariff".into(),
        ));
    }
    let utility = UtilityConfig::asa_pm(config.revenue_per_kwh);
    map(entries, execution, |&entry| {
        let r = entry.run(network, sessions, &utility, config)?;
        let bill = r.billing.unwrap_or_default();
        Ok(ProfitRow {
            algorithm: entry.name().to_string(),
            profit: bill.profit,
            revenue: bill.revenue,
            energy_cost: bill.energy_cost,
            demand_charge: bill.demand_charge,
            peak_kw: bill.peak_kw,
            demand_met: r.demand_met,
        })
    })?
    .into_iter()
    .collect()
}

/// Peak hint for a billing period: 75 % of the offline-optimal peak over
/// `history`, an earlier stretch of sessions on the same network.
pub fn peak_hint_from_history(
    network: &ChargingNetwork,
    history: &[Session],
    config: &SimConfig,
) -> Result<f64> {
    if history.is_empty() {
        return Ok(peak_hint(None));
    }
    let mut continuous = config.clone();
    continuous.scenario.continuous_evse = true;
    let offline = offline_optimal(
        network,
        history,
        &UtilityConfig::asa_pm(config.revenue_per_kwh),
        &continuous,
    )?;
    Ok(peak_hint(Some(offline.result.peak_kw())))
}

/// CSV of sweep points: one row per (capacity, algorithm).
pub fn write_sweep_csv(points: &[SweepPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w =
        csv::Writer::from_writer(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    w.write_record([
        "capacity_kva",
        "algorithm",
        "demand_met",
        "requested_kwh",
        "delivered_kwh",
        "peak_kw",
        "solves",
        "fallbacks",
        "audit_violations",
    ])?;
    for p in points {
        let s = &p.summary;
        w.write_record([
            p.capacity_kva.to_string(),
            s.algorithm.clone(),
            s.demand_met.to_string(),
            s.requested_kwh.to_string(),
            s.delivered_kwh.to_string(),
            s.peak_kw.to_string(),
            s.solver.solves.to_string(),
            s.solver.fallbacks.to_string(),
            s.audit.violations.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_profit_csv(rows: &[ProfitRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w =
        csv::Writer::from_writer(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    writeln!(file).map_err(|e| Error::io(path, e))
}
