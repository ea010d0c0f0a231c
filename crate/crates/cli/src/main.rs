//! `chargesched`: run scheduling experiments from a TOML config.

mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chargesched::batch::{
    self, compare_profit, peak_hint_from_history, sweep_capacity, Entry, Execution,
};
use chargesched::infra::presets;
use chargesched::simulator::{
    self, write_session_csv, write_site_csv, write_summary_json, write_traces_csv, Algorithm,
    Policy, Summary,
};
use chargesched::workload::{load_dataset, save_dataset, Session};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{ExperimentConfig, Overrides, Resolved};

#[derive(Parser, Debug)]
#[command(
    name = "chargesched",
    version,
    about = "Adaptive EV charging scheduler: simulations, capacity sweeps and profit studies"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Workload generator seed; overrides `workload.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Validate and print the resolved config without running anything.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Worker threads for sweeps and comparisons (1 runs sequentially).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one closed-loop simulation and write its traces and summary.
    Simulate,
    /// Demand met per algorithm over a range of transformer capacities.
    SweepCapacity,
    /// Operator profit, costs and revenue per algorithm.
    Profit,
    /// Write a synthetic session file.
    GenerateWorkload,
    /// Check a session file against the network.
    ValidateDataset {
        /// Session file; `workload.file` from the config if omitted.
        path: Option<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.apply(&Overrides {
        seed: cli.common.seed,
        out: cli.common.out.clone(),
    });
    if let Command::ValidateDataset { path } = cli.command {
        return validate_dataset(config, path, cli.common.dry_run);
    }
    let resolved = config.resolve()?;
    if cli.common.dry_run {
        print!("{}", resolved.config.to_toml()?);
        return Ok(());
    }
    if cli.common.jobs == Some(0) {
        bail!("--jobs must be positive");
    }
    let execution = cli
        .common
        .jobs
        .map_or_else(Execution::default, |j| Execution::with_jobs(Some(j)));
    match cli.command {
        Command::Simulate => simulate(resolved),
        Command::SweepCapacity => sweep(resolved, execution),
        Command::Profit => profit(resolved, execution),
        Command::GenerateWorkload => generate(resolved),
        Command::ValidateDataset { .. } => unreachable!("handled above"),
    }
}

fn output_dir(r: &Resolved) -> Result<&Path> {
    let dir = r.config.out.as_path();
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

/// Set the peak hint from the history workload when a hinted policy runs
/// and no hint was configured.
fn fill_peak_hint(r: &mut Resolved, needed: bool) -> Result<()> {
    let sim = &r.config.simulation;
    if needed && sim.peak_hint_kw == 0.0 {
        if r.history.is_empty() {
            log::warn!("no history workload: the peak hint stays at 0 kW");
        } else {
            r.config.simulation.peak_hint_kw = peak_hint_from_history(&r.network, &r.history, sim)?;
            log::info!(
                "peak hint {:.2} kW from {} history sessions",
                r.config.simulation.peak_hint_kw,
                r.history.len()
            );
        }
    }
    Ok(())
}

fn write_resolved(r: &Resolved, dir: &Path) -> Result<()> {
    let path = dir.join("resolved_config.toml");
    std::fs::write(&path, r.config.to_toml()?)
        .with_context(|| format!("cannot write {}", path.display()))
}

fn simulate(mut r: Resolved) -> Result<()> {
    let policy = r.config.policy();
    let hinted = matches!(
        policy,
        Policy::Asa {
            use_peak_hint: true,
            ..
        }
    );
    fill_peak_hint(&mut r, hinted)?;
    let result = simulator::run(&r.network, &r.sessions, &policy, &r.config.simulation)?;
    let dir = output_dir(&r)?;
    write_summary_json(&result, dir.join("summary.json"))?;
    write_traces_csv(&result, dir.join("traces.csv"))?;
    write_site_csv(&result, dir.join("site.csv"))?;
    write_session_csv(&result, dir.join("sessions.csv"))?;
    write_resolved(&r, dir)?;
    let s = Summary::of(&result);
    println!(
        "{}: {} sessions, demand met {:.2}%, peak {:.1} kW{}",
        s.algorithm,
        s.sessions,
        100.0 * s.demand_met,
        s.peak_kw,
        s.billing
            .map(|b| format!(", profit ${:.2}", b.profit))
            .unwrap_or_default()
    );
    Ok(())
}

fn entries(algorithms: &[Algorithm], include_optimal: bool) -> Vec<Entry> {
    let mut out: Vec<Entry> = algorithms.iter().map(|&a| Entry::Online(a)).collect();
    if include_optimal {
        out.push(Entry::Optimal);
    }
    out
}

fn sweep(mut r: Resolved, execution: Execution) -> Result<()> {
    let Some(preset) = r.config.network.preset.clone() else {
        bail!("sweep-capacity needs a network preset");
    };
    if r.config.sweep.capacities_kva.is_empty()
        || r.config.sweep.algorithms.is_empty() && !r.config.sweep.include_optimal
    {
        bail!("the sweep needs at least one capacity and one algorithm");
    }
    let hinted = r.config.sweep.algorithms.contains(&Algorithm::AsaPmHint);
    fill_peak_hint(&mut r, hinted)?;
    let entries = entries(&r.config.sweep.algorithms, r.config.sweep.include_optimal);
    let points = sweep_capacity(
        |kva| presets::by_name(&preset, Some(kva)).expect("preset checked during resolution"),
        &r.config.sweep.capacities_kva,
        &entries,
        &r.sessions,
        &r.config.simulation,
        execution,
    )?;
    let dir = output_dir(&r)?;
    batch::write_sweep_csv(&points, dir.join("sweep.csv"))?;
    batch::write_json(&points, dir.join("sweep.json"))?;
    write_resolved(&r, dir)?;
    for p in &points {
        println!(
            "{:>8.1} kVA  {:<13} {:.2}%",
            p.capacity_kva,
            p.summary.algorithm,
            100.0 * p.summary.demand_met
        );
    }
    Ok(())
}

fn profit(mut r: Resolved, execution: Execution) -> Result<()> {
    if r.config.simulation.tariff.is_none() {
        bail!("the profit study needs a tariff (set `tariff = \"sce-tou-ev-4\"`)");
    }
    let hinted = r.config.profit.algorithms.contains(&Algorithm::AsaPmHint);
    fill_peak_hint(&mut r, hinted)?;
    let entries = entries(&r.config.profit.algorithms, r.config.profit.include_optimal);
    let rows = compare_profit(
        &r.network,
        &r.sessions,
        &entries,
        &r.config.simulation,
        execution,
    )?;
    let dir = output_dir(&r)?;
    batch::write_profit_csv(&rows, dir.join("profit.csv"))?;
    batch::write_json(&rows, dir.join("profit.json"))?;
    write_resolved(&r, dir)?;
    for row in &rows {
        println!(
            "{:<13} profit ${:>10.2}  revenue ${:>10.2}  energy ${:>9.2}  demand ${:>9.2}  peak {:>7.1} kW  met {:.2}%",
            row.algorithm,
            row.profit,
            row.revenue,
            row.energy_cost,
            row.demand_charge,
            row.peak_kw,
            100.0 * row.demand_met
        );
    }
    Ok(())
}

fn generate(r: Resolved) -> Result<()> {
    if r.config.workload.file.is_some() {
        bail!("generate-workload uses the generator; remove `workload.file` from the config");
    }
    let dir = output_dir(&r)?;
    let base = r.config.simulation.time_base;
    save_dataset(dir.join("workload.json"), &r.sessions, base)?;
    if !r.history.is_empty() {
        save_dataset(dir.join("history.json"), &r.history, base)?;
    }
    write_resolved(&r, dir)?;
    println!(
        "{} sessions ({:.1} kWh requested){}",
        r.sessions.len(),
        kwh(&r.sessions),
        if r.history.is_empty() {
            String::new()
        } else {
            format!(", {} history sessions", r.history.len())
        }
    );
    Ok(())
}

fn kwh(sessions: &[Session]) -> f64 {
    sessions.iter().map(|s| s.original_kwh).sum()
}

#[derive(Serialize)]
struct ValidationReport {
    path: PathBuf,
    sessions: usize,
    dropped: usize,
    requested_kwh: f64,
    evses_used: usize,
    first_arrival: Option<usize>,
    last_departure: Option<usize>,
    valid: bool,
    problem: Option<String>,
}

fn validate_dataset(
    mut config: ExperimentConfig,
    path: Option<PathBuf>,
    dry_run: bool,
) -> Result<()> {
    config.normalize()?;
    let Some(path) = path.or_else(|| config.workload.file.clone()) else {
        bail!("no session file: pass a path or set `workload.file`");
    };
    if dry_run {
        print!("{}", config.to_toml()?);
        return Ok(());
    }
    let network = config.build_network(None)?;
    let loaded = load_dataset(&path, &network, config.simulation.time_base)
        .with_context(|| format!("cannot load sessions from {}", path.display()))?;
    let problem = simulator::validate_sessions(&network, &loaded.sessions)
        .err()
        .map(|e| e.to_string());
    let mut evses: Vec<&str> = loaded.sessions.iter().map(|s| s.evse_id.as_str()).collect();
    evses.sort_unstable();
    evses.dedup();
    let report = ValidationReport {
        path: path.clone(),
        sessions: loaded.sessions.len(),
        dropped: loaded.dropped,
        requested_kwh: kwh(&loaded.sessions),
        evses_used: evses.len(),
        first_arrival: loaded.sessions.iter().map(|s| s.arrival).min(),
        last_departure: loaded.sessions.iter().map(|s| s.departure).max(),
        valid: problem.is_none(),
        problem,
    };
    std::fs::create_dir_all(&config.out)
        .with_context(|| format!("cannot create output directory {}", config.out.display()))?;
    batch::write_json(&report, config.out.join("validation.json"))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(p) = report.problem {
        bail!("{} is not a valid workload: {p}", path.display());
    }
    Ok(())
}
