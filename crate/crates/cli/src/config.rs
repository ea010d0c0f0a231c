//! Experiment configuration files.
//!
//! A config is a TOML file. Every section is optional; missing values take
//! the defaults below. [`ExperimentConfig::resolve`] loads the referenced
//! network and workload, fills in every default (including the utility
//! weights of the named algorithm) and returns the inputs of a run. The
//! resolved config is written next to the results so a run can be repeated
//! from its output directory alone.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use chargesched::billing::Tariff;
use chargesched::infra::{presets, ChargingNetwork};
use chargesched::scheduler::UtilityConfig;
use chargesched::simulator::{validate_sessions, Algorithm, Policy, SimConfig};
use chargesched::workload::{
    generate_workload, load_dataset, DayOfWeek, GeneratorConfig, Session, WorkloadStats,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output directory.
    pub out: PathBuf,
    pub network: NetworkSpec,
    pub workload: WorkloadSpec,
    pub algorithm: AlgorithmSpec,
    /// Tariff preset name, `{ file = "..." }`, or an inline tariff table.
    /// Resolved into `simulation.tariff`.
    pub tariff: Option<TariffSpec>,
    pub sweep: SweepSpec,
    pub profit: ProfitSpec,
    pub simulation: SimConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            out: PathBuf::from("results"),
            network: NetworkSpec::default(),
            workload: WorkloadSpec::default(),
            algorithm: AlgorithmSpec::default(),
            tariff: None,
            sweep: SweepSpec::default(),
            profit: ProfitSpec::default(),
            simulation: SimConfig::default(),
        }
    }
}

/// A preset name or a network JSON file; the `caltech` preset if neither.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub preset: Option<String>,
    pub file: Option<PathBuf>,
    /// Transformer rating for presets; ignored for files.
    pub capacity_kva: Option<f64>,
}

/// A session file, or the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    /// JSON array of session records. Takes precedence over the generator.
    pub file: Option<PathBuf>,
    /// Earlier sessions on the same network, used for the peak hint.
    pub history_file: Option<PathBuf>,
    /// Generator statistics (JSON); the built-in garage statistics if unset.
    pub stats: Option<PathBuf>,
    /// Simulated days, starting at `simulation.start_day`.
    pub days: usize,
    /// Generated days before the simulated window, used for the peak hint.
    pub history_days: usize,
    pub session_scale: f64,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            file: None,
            history_file: None,
            stats: None,
            days: 7,
            history_days: 0,
            session_scale: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: Algorithm,
    /// Objective of the adaptive scheduler; the preset of `name` if unset.
    pub utility: Option<UtilityConfig>,
}

impl Default for AlgorithmSpec {
    fn default() -> Self {
        AlgorithmSpec {
            name: Algorithm::AsaQc,
            utility: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TariffSpec {
    Preset(String),
    File { file: PathBuf },
    Inline(Tariff),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub capacities_kva: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    /// Add the offline optimum as a reference row at every capacity.
    pub include_optimal: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            capacities_kva: (2..=15).map(|c| 10.0 * c as f64).collect(),
            algorithms: vec![
                Algorithm::AsaQc,
                Algorithm::Llf,
                Algorithm::Edf,
                Algorithm::Rr,
            ],
            include_optimal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfitSpec {
    pub algorithms: Vec<Algorithm>,
    pub include_optimal: bool,
}

impl Default for ProfitSpec {
    fn default() -> Self {
        ProfitSpec {
            algorithms: vec![
                Algorithm::AsaPm,
                Algorithm::AsaPmHint,
                Algorithm::Llf,
                Algorithm::Uncontrolled,
            ],
            include_optimal: true,
        }
    }
}

/// Overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Everything a command needs, loaded and checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub network: ChargingNetwork,
    pub sessions: Vec<Session>,
    pub history: Vec<Session>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        config.rebase(path.parent().unwrap_or(Path::new("")));
        Ok(config)
    }

    /// Make relative file paths relative to the config file's directory.
    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.out);
        for p in [
            &mut self.network.file,
            &mut self.workload.file,
            &mut self.workload.history_file,
            &mut self.workload.stats,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        if let Some(TariffSpec::File { file }) = &mut self.tariff {
            fix(file);
        }
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.workload.seed = seed;
        }
        if let Some(out) = &overrides.out {
            self.out = out.clone();
        }
    }

    /// Fill defaults and check values that do not need any file.
    pub fn normalize(&mut self) -> Result<()> {
        if self.network.preset.is_none() && self.network.file.is_none() {
            self.network.preset = Some("caltech".into());
        }
        match (&self.network.preset, &self.network.file) {
            (Some(_), Some(_)) => bail!("set either network.preset or network.file, not both"),
            (None, None) => unreachable!("filled above"),
            (Some(name), None) => {
                ensure!(
                    presets::by_name(name, None).is_some(),
                    "unknown network preset `{name}` (expected caltech or small-site)"
                );
                let kva = *self
                    .network
                    .capacity_kva
                    .get_or_insert(default_capacity(name));
                ensure!(
                    kva.is_finite() && kva > 0.0,
                    "network.capacity_kva must be positive, got {kva}"
                );
            }
            (None, Some(_)) => {}
        }
        if let Some(spec) = self.tariff.take() {
            let tariff = match spec {
                TariffSpec::Preset(name) => Tariff::by_name(&name)
                    .with_context(|| format!("unknown tariff `{name}` (expected sce-tou-ev-4)"))?,
                TariffSpec::File { file } => Tariff::load(&file)?,
                TariffSpec::Inline(t) => t,
            };
            self.simulation.tariff = Some(tariff);
        }
        if let Some(t) = &self.simulation.tariff {
            t.validate()?;
        }
        let is_asa = matches!(self.algorithm.name.policy(0.0), Policy::Asa { .. });
        match (&self.algorithm.utility, is_asa) {
            (Some(_), false) => bail!(
                "algorithm `{}` does not take a utility",
                self.algorithm.name
            ),
            (Some(u), true) => u.validate()?,
            (None, true) => {
                if let Policy::Asa { utility, .. } =
                    self.algorithm.name.policy(self.simulation.revenue_per_kwh)
                {
                    self.algorithm.utility = Some(utility);
                }
            }
            (None, false) => {}
        }
        for &c in &self.sweep.capacities_kva {
            ensure!(
                c.is_finite() && c > 0.0,
                "sweep capacities must be finite and positive, got {c}"
            );
        }
        ensure!(
            self.workload.session_scale >= 0.0,
            "workload.session_scale must be non-negative"
        );
        ensure!(
            self.workload.file.is_some() || self.workload.days > 0,
            "workload.days must be positive"
        );
        ensure!(
            self.simulation.time_base.period_minutes > 0.0,
            "simulation.time_base.period_minutes must be positive"
        );
        Ok(())
    }

    /// The policy of `[algorithm]`, with its resolved utility.
    pub fn policy(&self) -> Policy {
        let preset = self.algorithm.name.policy(self.simulation.revenue_per_kwh);
        match (preset, &self.algorithm.utility) {
            (
                Policy::Asa {
                    name,
                    use_peak_hint,
                    ..
                },
                Some(utility),
            ) => Policy::Asa {
                name,
                utility: utility.clone(),
                use_peak_hint,
            },
            (p, _) => p,
        }
    }

    pub fn build_network(&self, capacity_kva: Option<f64>) -> Result<ChargingNetwork> {
        match (&self.network.preset, &self.network.file) {
            (Some(name), _) => presets::by_name(name, capacity_kva.or(self.network.capacity_kva))
                .with_context(|| format!("unknown network preset `{name}`")),
            (None, Some(file)) => {
                ensure!(
                    capacity_kva.is_none(),
                    "capacity sweeps need a network preset"
                );
                ChargingNetwork::load(file)
                    .with_context(|| format!("cannot load network {}", file.display()))
            }
            (None, None) => bail!("the network needs a preset or a file"),
        }
    }

    /// Normalize, then load the network and the sessions.
    pub fn resolve(mut self) -> Result<Resolved> {
        self.normalize()?;
        let network = self.build_network(None)?;
        let (sessions, history) = self.load_workload(&network)?;
        validate_sessions(&network, &sessions).context("invalid workload")?;
        validate_sessions(&network, &history).context("invalid history workload")?;
        Ok(Resolved {
            config: self,
            network,
            sessions,
            history,
        })
    }

    fn load_workload(&self, network: &ChargingNetwork) -> Result<(Vec<Session>, Vec<Session>)> {
        let base = self.simulation.time_base;
        let read = |path: &Path| -> Result<Vec<Session>> {
            Ok(load_dataset(path, network, base)
                .with_context(|| format!("cannot load sessions from {}", path.display()))?
                .sessions)
        };
        let w = &self.workload;
        if let Some(file) = &w.file {
            let history = w
                .history_file
                .as_deref()
                .map(read)
                .transpose()?
                .unwrap_or_default();
            return Ok((read(file)?, history));
        }
        let stats = match &w.stats {
            Some(path) => WorkloadStats::load(path)
                .with_context(|| format!("cannot load workload statistics {}", path.display()))?,
            None => WorkloadStats::caltech(),
        };
        let first_day =
            DayOfWeek::ALL[(self.simulation.start_day as usize + 7 - w.history_days % 7) % 7];
        let cfg = GeneratorConfig {
            time_base: base,
            session_scale: w.session_scale,
        };
        let all = generate_workload(
            &stats,
            &first_day.sequence(w.history_days + w.days),
            network,
            cfg,
            w.seed,
        );
        Ok(split_history(all, w.history_days * base.periods_per_day()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("cannot serialize the resolved config")
    }
}

fn default_capacity(preset: &str) -> f64 {
    match preset {
        "small-site" => 28.0,
        _ => 150.0,
    }
}

/// Sessions that end by `split` form the history; sessions that start at or
/// after it are shifted to start the simulated window at period 0. Sessions
/// spanning the split belong to neither.
pub fn split_history(sessions: Vec<Session>, split: usize) -> (Vec<Session>, Vec<Session>) {
    if split == 0 {
        return (sessions, Vec::new());
    }
    let mut window = Vec::new();
    let mut history = Vec::new();
    for s in sessions {
        if s.departure <= split {
            history.push(s);
        } else if s.arrival >= split {
            window.push(Session {
                arrival: s.arrival - split,
                departure: s.departure - split,
                ..s
            });
        }
    }
    (window, history)
}
