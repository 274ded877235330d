//! Run configuration and the concrete run driver.
//!
//! A configuration is a flat set of `key = value` pairs. Files are TOML (or a
//! previous run's `run_manifest.json`); command-line overrides use the same
//! keys, so both routes resolve to the same [`RunConfig`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::Serialize;

use crate::backend::{Backend, ChainMolBackend, ChainSchedule, DiscreteChainBackend, GaussianChainBackend};
use crate::engine::{
    run_steered_with, run_unguided_with, CsvLogSink, LogSink, RunOutput, SteeringParams, Tee,
    TrajectoryLog, DEFAULT_TERMINAL_EVALS,
};
use crate::error::{Error, Result};
use crate::potentials::{PotentialKind, PotentialSpec};
use crate::reporting::{
    diversity_curve, reward_trajectory_table, sequence_diversity, ss_composition_table,
    write_diversity_csv, write_rewards_long_csv, write_ss_fractions_csv,
};
use crate::resampling::{ResampleMethod, ResampleSchedule};
use crate::rewards::{
    default_binding_target, load_target_csv, Aggregation, ChainReward, ChainRewardKind,
    ExternalReward, LinearReward, RewardFunction, RewardPipeline, SecondaryStructureTargets,
    SsClass, TableReward, WorkerHandle,
};
use crate::rng::{stream, Purpose};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every accepted key, in manifest order.
pub const KEYS: &[&str] = &[
    "n_particles",
    "tau",
    "t_start",
    "dt",
    "potential",
    "terminal_correction",
    "n_evals",
    "aggregation",
    "resample_method",
    "seed",
    "backend",
    "steps",
    "states",
    "kernels",
    "backend_seed",
    "rho",
    "dim",
    "length",
    "reward",
    "reward_table",
    "slope",
    "q_star",
    "ss_target",
    "target_csv",
    "worker_command",
    "worker_timeout_secs",
    "refiner_temperature",
    "log_every_step",
    "terminal_evals",
    "snapshots",
    "oracle_tolerance",
];

#[derive(Clone, Debug, PartialEq)]
pub enum BackendSpec {
    /// Random flat-Dirichlet kernels from `backend_seed`, or a kernel file.
    Discrete {
        states: usize,
        steps: usize,
        kernels: Option<PathBuf>,
        backend_seed: u64,
    },
    Gaussian { steps: usize, rho: f64, dim: usize },
    ChainMol { length: usize, steps: usize },
}

impl BackendSpec {
    pub fn steps(&self) -> usize {
        match self {
            BackendSpec::Discrete { steps, .. }
            | BackendSpec::Gaussian { steps, .. }
            | BackendSpec::ChainMol { steps, .. } => *steps,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BackendSpec::Discrete { .. } => "discrete",
            BackendSpec::Gaussian { .. } => "gaussian",
            BackendSpec::ChainMol { .. } => "chainmol",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RewardSpec {
    Table { values: Vec<f64> },
    Linear { slope: f64 },
    Charge { q_star: i32 },
    SecondaryStructure { target: SsClass },
    Binding { target_csv: Option<PathBuf> },
    External { command: Vec<String>, timeout: Duration },
}

impl RewardSpec {
    pub fn name(&self) -> &'static str {
        match self {
            RewardSpec::Table { .. } => "table",
            RewardSpec::Linear { .. } => "linear",
            RewardSpec::Charge { .. } => "charge",
            RewardSpec::SecondaryStructure { .. } => "secondary_structure",
            RewardSpec::Binding { .. } => "binding",
            RewardSpec::External { .. } => "external",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n_particles: usize,
    pub tau: f64,
    pub t_start: usize,
    pub dt: usize,
    pub potential: PotentialKind,
    pub terminal_correction: bool,
    pub n_evals: usize,
    pub aggregation: Aggregation,
    pub resample_method: ResampleMethod,
    pub seed: u64,
    pub backend: BackendSpec,
    pub reward: RewardSpec,
    pub refiner_temperature: f64,
    pub log_every_step: bool,
    pub terminal_evals: usize,
    pub snapshots: bool,
    pub oracle_tolerance: f64,
    /// Resolved key/value pairs this config was built from.
    pub resolved: BTreeMap<String, String>,
}

fn defaults() -> BTreeMap<String, String> {
    [
        ("n_particles", "20"),
        ("tau", "10"),
        ("t_start", "50"),
        ("dt", "2"),
        ("potential", "immediate"),
        ("n_evals", "1"),
        ("aggregation", "mean"),
        ("resample_method", "multinomial"),
        ("seed", "0"),
        ("backend", "chainmol"),
        ("steps", "50"),
        ("length", "15"),
        ("reward", "binding"),
        ("refiner_temperature", "0.2"),
        ("log_every_step", "false"),
        ("snapshots", "false"),
        ("oracle_tolerance", "0.02"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

fn toml_to_string(v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items
            .iter()
            .map(toml_to_string)
            .collect::<Result<Vec<_>>>()?
            .join(","),
        other => return Err(Error::config(format!("unsupported value {other}"))),
    })
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(Error::config(format!(
            "unknown key {key:?}; valid keys: {}",
            KEYS.join(", ")
        )))
    }
}

/// Read a config file: TOML, or the `config` object of a run manifest.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    if path.extension().is_some_and(|e| e == "json") {
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let obj = v
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| Error::config("manifest has no config object"))?;
        for (k, v) in obj {
            check_key(k)?;
            let s = v.as_str().map(String::from).unwrap_or_else(|| v.to_string());
            map.insert(k.clone(), s);
        }
    } else {
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        for (k, v) in &table {
            check_key(k)?;
            map.insert(k.clone(), toml_to_string(v)?);
        }
    }
    Ok(map)
}

/// Parse `key=value` overrides.
pub fn parse_overrides<S: AsRef<str>>(items: &[S]) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for item in items {
        let (k, v) = item
            .as_ref()
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override {:?} is not key=value", item.as_ref())))?;
        let k = k.trim();
        check_key(k)?;
        map.insert(k.to_string(), v.trim().to_string());
    }
    Ok(map)
}

struct Keys<'a>(&'a BTreeMap<String, String>);

impl Keys<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str).filter(|s| !s.is_empty())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|s| {
                s.parse::<T>()
                    .map_err(|_| Error::config(format!("{key}: cannot parse {s:?}")))
            })
            .transpose()
    }

    fn req<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::config(format!("missing required key {key}")))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key)
            .map(|s| {
                s.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::config(format!("{key}: bad number {x:?}")))
                    })
                    .collect()
            })
            .transpose()
    }
}

impl RunConfig {
    /// Built-in defaults: a 15-residue ChainMol binder, τ = 10, 20 particles,
    /// onset at 50, interval 2, immediate potential.
    pub fn standard() -> Self {
        Self::from_map(&BTreeMap::new()).expect("defaults are valid")
    }

    /// Defaults, then `file`, then `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut map = BTreeMap::new();
        if let Some(path) = file {
            map.extend(read_config_file(path)?);
        }
        map.extend(parse_overrides(overrides)?);
        Self::from_map(&map)
    }

    /// Apply overrides on top of this config.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut map = self.resolved.clone();
        map.extend(parse_overrides(overrides)?);
        Self::from_map(&map)
    }

    pub fn from_map(user: &BTreeMap<String, String>) -> Result<Self> {
        for k in user.keys() {
            check_key(k)?;
        }
        let mut map = defaults();
        map.extend(user.iter().map(|(k, v)| (k.clone(), v.clone())));
        let k = Keys(&map);

        let steps: usize = k.req("steps")?;
        if steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        let backend = match k.req::<String>("backend")?.to_ascii_lowercase().as_str() {
            "discrete" => BackendSpec::Discrete {
                states: k.get("states")?.unwrap_or(5),
                steps,
                kernels: k.get::<PathBuf>("kernels")?,
                backend_seed: k.get("backend_seed")?.unwrap_or(0),
            },
            "gaussian" => BackendSpec::Gaussian {
                steps,
                rho: k.get("rho")?.unwrap_or(0.95),
                dim: k.get("dim")?.unwrap_or(1),
            },
            "chainmol" => BackendSpec::ChainMol {
                length: k.req("length")?,
                steps,
            },
            other => {
                return Err(Error::config(format!(
                    "unknown backend {other:?}; expected discrete|gaussian|chainmol"
                )))
            }
        };

        let reward_name = k.req::<String>("reward")?.to_ascii_lowercase();
        let reward = match reward_name.as_str() {
            "table" => RewardSpec::Table {
                values: match k.list("reward_table")? {
                    Some(v) => v,
                    None => match &backend {
                        BackendSpec::Discrete { states, .. } => (0..*states).map(|s| s as f64).collect(),
                        _ => return Err(Error::config("reward=table needs reward_table")),
                    },
                },
            },
            "linear" => RewardSpec::Linear {
                slope: k.get("slope")?.unwrap_or(1.0),
            },
            "charge" => RewardSpec::Charge {
                q_star: k.get("q_star")?.unwrap_or(0),
            },
            "secondary_structure" | "ss" => RewardSpec::SecondaryStructure {
                target: k.get("ss_target")?.unwrap_or(SsClass::Helix),
            },
            "binding" => RewardSpec::Binding {
                target_csv: k.get("target_csv")?,
            },
            "external" => {
                let command: Vec<String> = k
                    .raw("worker_command")
                    .ok_or_else(|| Error::config("reward=external needs worker_command"))?
                    .split_whitespace()
                    .map(String::from)
                    .collect();
                let secs: f64 = k.get("worker_timeout_secs")?.unwrap_or(30.0);
                if !(secs > 0.0 && secs.is_finite()) {
                    return Err(Error::config("worker_timeout_secs must be positive"));
                }
                RewardSpec::External {
                    command,
                    timeout: Duration::from_secs_f64(secs),
                }
            }
            other => {
                return Err(Error::config(format!(
                    "unknown reward {other:?}; expected table|linear|charge|secondary_structure|binding|external"
                )))
            }
        };
        let compatible = matches!(
            (&backend, &reward),
            (BackendSpec::Discrete { .. }, RewardSpec::Table { .. } | RewardSpec::External { .. })
                | (BackendSpec::Gaussian { .. }, RewardSpec::Linear { .. } | RewardSpec::External { .. })
                | (
                    BackendSpec::ChainMol { .. },
                    RewardSpec::Charge { .. }
                        | RewardSpec::SecondaryStructure { .. }
                        | RewardSpec::Binding { .. }
                        | RewardSpec::External { .. }
                )
        );
        if !compatible {
            return Err(Error::config(format!(
                "reward {} does not apply to backend {}",
                reward.name(),
                backend.name()
            )));
        }

        let potential: PotentialKind = k.req("potential")?;
        let tau: f64 = k.req("tau")?;
        let terminal_correction = k
            .get("terminal_correction")?
            .unwrap_or(potential == PotentialKind::Difference);
        PotentialSpec::with_correction(potential, tau, terminal_correction)?;

        let t_start: usize = k.req("t_start")?;
        let dt: usize = k.req("dt")?;
        ResampleSchedule::new(t_start, dt, steps)?;

        let n_particles: usize = k.req("n_particles")?;
        if n_particles == 0 {
            return Err(Error::config("n_particles must be at least 1"));
        }
        let n_evals: usize = k.req("n_evals")?;
        if n_evals == 0 {
            return Err(Error::config("n_evals must be at least 1"));
        }
        let refiner_temperature: f64 = k.req("refiner_temperature")?;
        if !(refiner_temperature > 0.0) {
            return Err(Error::config("refiner_temperature must be positive"));
        }
        let oracle_tolerance: f64 = k.req("oracle_tolerance")?;
        if !(oracle_tolerance > 0.0) {
            return Err(Error::config("oracle_tolerance must be positive"));
        }

        Ok(Self {
            n_particles,
            tau,
            t_start,
            dt,
            potential,
            terminal_correction,
            n_evals,
            aggregation: k.req("aggregation")?,
            resample_method: k.req("resample_method")?,
            seed: k.req("seed")?,
            backend,
            reward,
            refiner_temperature,
            log_every_step: k.req("log_every_step")?,
            terminal_evals: k.get("terminal_evals")?.unwrap_or(DEFAULT_TERMINAL_EVALS),
            snapshots: k.req("snapshots")?,
            oracle_tolerance,
            resolved: map,
        })
    }

    pub fn steering_params(&self) -> Result<SteeringParams<f64>> {
        let mut p = SteeringParams::new(
            self.n_particles,
            PotentialSpec::with_correction(self.potential, self.tau, self.terminal_correction)?,
            ResampleSchedule::new(self.t_start, self.dt, self.backend.steps())?,
            self.seed,
        );
        p.method = self.resample_method;
        p.log_every_step = self.log_every_step;
        p.terminal_evals = self.terminal_evals;
        p.snapshots = self.snapshots;
        Ok(p)
    }

    pub fn discrete_backend(&self) -> Result<DiscreteChainBackend<f64>> {
        match &self.backend {
            BackendSpec::Discrete {
                states,
                steps,
                kernels,
                backend_seed,
            } => match kernels {
                Some(path) => {
                    let b = DiscreteChainBackend::from_csv(path, None)?;
                    if Backend::<f64>::steps(&b) != *steps {
                        return Err(Error::config(format!(
                            "kernel file holds {} steps but steps = {steps}",
                            Backend::<f64>::steps(&b)
                        )));
                    }
                    Ok(b)
                }
                None => DiscreteChainBackend::random(
                    *states,
                    *steps,
                    &mut stream(*backend_seed, Purpose::Backend, 0, 0, 0),
                ),
            },
            _ => Err(Error::config("not a discrete backend")),
        }
    }

    fn external(&self, command: &[String], timeout: Duration) -> Result<ExternalReward<f64>> {
        let worker = WorkerHandle::spawn(command, timeout)?;
        Ok(ExternalReward::new(worker, format!("seed{}", self.seed), self.refiner_temperature))
    }

    fn pipeline<P>(&self, f: Box<dyn RewardFunction<f64, P>>) -> Result<RewardPipeline<f64, P>> {
        RewardPipeline::new(f, self.n_evals, self.aggregation)
    }

    pub fn chain_reward(&self) -> Result<Box<dyn RewardFunction<f64, Vec<[f64; 2]>>>> {
        let kind = match &self.reward {
            RewardSpec::Charge { q_star } => ChainRewardKind::Charge { q_star: *q_star },
            RewardSpec::SecondaryStructure { target } => {
                ChainRewardKind::SecondaryStructure(SecondaryStructureTargets::steer_toward(*target))
            }
            RewardSpec::Binding { target_csv } => ChainRewardKind::Binding {
                target: match target_csv {
                    Some(p) => load_target_csv(p)?,
                    None => default_binding_target(),
                },
            },
            RewardSpec::External { command, timeout } => return Ok(Box::new(self.external(command, *timeout)?)),
            other => return Err(Error::config(format!("reward {} is not a chain reward", other.name()))),
        };
        Ok(Box::new(ChainReward {
            kind,
            temperature: self.refiner_temperature,
        }))
    }

    fn vector_reward(&self) -> Result<Box<dyn RewardFunction<f64, Vec<f64>>>> {
        Ok(match &self.reward {
            RewardSpec::Table { values } => Box::new(TableReward { values: values.clone() }),
            RewardSpec::Linear { slope } => Box::new(LinearReward { slope: *slope }),
            RewardSpec::External { command, timeout } => Box::new(self.external(command, *timeout)?),
            other => return Err(Error::config(format!("reward {} needs a chain backend", other.name()))),
        })
    }

    /// Key/value echo for manifests.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = self.resolved.clone();
        m.insert("terminal_correction".into(), self.terminal_correction.to_string());
        m.insert("terminal_evals".into(), self.terminal_evals.to_string());
        m
    }
}

/// Headline numbers of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub n_particles: usize,
    /// Mean independent terminal re-evaluation of the steered ensemble.
    pub mean_terminal_reward: Option<f64>,
    pub terminal_diversity: Option<f64>,
    pub baseline_mean_terminal_reward: Option<f64>,
    pub baseline_terminal_diversity: Option<f64>,
    /// Mean helix/strand/loop fractions of the terminal designs.
    pub ss_means: Option<[f64; 3]>,
    pub min_ess: Option<f64>,
    pub elapsed_secs: f64,
}

/// Everything a run produced, kept in memory.
pub struct RunArtifacts<P> {
    pub output: RunOutput<P, f64>,
    pub log: TrajectoryLog<f64>,
    pub baseline: Option<(RunOutput<P, f64>, TrajectoryLog<f64>)>,
    pub summary: RunSummary,
}

trait Designs: Backend<f64> {
    fn ss_rows(&self, _payloads: &[Self::Payload]) -> Option<Result<Vec<[f64; 3]>>> {
        None
    }
}

impl Designs for DiscreteChainBackend<f64> {}
impl Designs for GaussianChainBackend<f64> {}
impl Designs for ChainMolBackend<f64> {
    fn ss_rows(&self, payloads: &[Self::Payload]) -> Option<Result<Vec<[f64; 3]>>> {
        Some(ss_composition_table(payloads).map(|rows| rows.iter().map(|f| f.as_array()).collect()))
    }
}

fn terminal_diversity<P>(out: &RunOutput<P, f64>) -> Option<f64> {
    let tokens = out.tokens()?;
    sequence_diversity(&tokens).ok()
}

fn column_means(rows: &[[f64; 3]]) -> [f64; 3] {
    let n = rows.len().max(1) as f64;
    let mut m = [0.0; 3];
    for r in rows {
        for (a, x) in m.iter_mut().zip(r) {
            *a += x / n;
        }
    }
    m
}

fn write_reports<B: Designs>(
    backend: &B,
    dir: &Path,
    out: &RunOutput<B::Payload, f64>,
    log: &TrajectoryLog<f64>,
) -> Result<()> {
    out.write_terminal_csv(backend, &dir.join("terminal.csv"))?;
    write_rewards_long_csv(&dir.join("rewards_long.csv"), &reward_trajectory_table(log))?;
    let curve = diversity_curve(log)?;
    if !curve.is_empty() {
        write_diversity_csv(&dir.join("diversity.csv"), &curve)?;
    }
    let payloads: Vec<B::Payload> = out.payloads().cloned().collect();
    if let Some(rows) = backend.ss_rows(&payloads) {
        let rows = rows?;
        let fr: Vec<_> = rows
            .iter()
            .map(|r| crate::rewards::SsFractions { alpha: r[0], beta: r[1], ell: r[2] })
            .collect();
        write_ss_fractions_csv(&dir.join("ss_fractions.csv"), &fr)?;
    }
    Ok(())
}

fn execute<B: Designs>(
    cfg: &RunConfig,
    backend: &B,
    pipeline: &RewardPipeline<f64, B::Proxy>,
    out_dir: Option<&Path>,
    baseline: bool,
) -> Result<RunArtifacts<B::Payload>> {
    let params = cfg.steering_params()?;
    let started = std::time::Instant::now();
    let mut log = TrajectoryLog::new();
    let output = match out_dir {
        Some(dir) => {
            let mut csv = CsvLogSink::create(dir)?;
            run_steered_with(backend, pipeline, &params, &mut Tee(&mut log, &mut csv as &mut dyn LogSink<f64>))?
        }
        None => run_steered_with(backend, pipeline, &params, &mut log)?,
    };
    let base = if baseline {
        let mut blog = TrajectoryLog::new();
        let bout = match out_dir {
            Some(dir) => {
                let bdir = dir.join("baseline");
                let mut csv = CsvLogSink::create(&bdir)?;
                let o = run_unguided_with(
                    backend,
                    Some(pipeline),
                    &params,
                    &mut Tee(&mut blog, &mut csv as &mut dyn LogSink<f64>),
                )?;
                write_reports(backend, &bdir, &o, &blog)?;
                o
            }
            None => run_unguided_with(backend, Some(pipeline), &params, &mut blog)?,
        };
        Some((bout, blog))
    } else {
        None
    };

    let payloads: Vec<B::Payload> = output.payloads().cloned().collect();
    let ss_means = match backend.ss_rows(&payloads) {
        Some(rows) => Some(column_means(&rows?)),
        None => None,
    };
    let summary = RunSummary {
        seed: cfg.seed,
        n_particles: cfg.n_particles,
        mean_terminal_reward: output.mean_assessed_reward(),
        terminal_diversity: terminal_diversity(&output),
        baseline_mean_terminal_reward: base.as_ref().and_then(|(o, _)| o.mean_assessed_reward()),
        baseline_terminal_diversity: base.as_ref().and_then(|(o, _)| terminal_diversity(o)),
        ss_means,
        min_ess: log.events.iter().map(|e| e.ess).reduce(f64::min),
        elapsed_secs: started.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out_dir {
        write_reports(backend, dir, &output, &log)?;
        write_manifest(cfg, dir, &summary)?;
    }
    Ok(RunArtifacts {
        output,
        log,
        baseline: base,
        summary,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a BTreeMap<String, String>,
    summary: &'a RunSummary,
}

pub fn write_manifest(cfg: &RunConfig, dir: &Path, summary: &RunSummary) -> Result<()> {
    let echo = cfg.echo();
    let m = Manifest {
        tool: "fksteer",
        version: VERSION,
        seed: cfg.seed,
        config: &echo,
        summary,
    };
    std::fs::write(dir.join("run_manifest.json"), serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(())
}

/// Terminal payloads of a run, by backend.
pub enum Terminal {
    Discrete(RunArtifacts<usize>),
    Gaussian(RunArtifacts<Vec<f64>>),
    Chain(RunArtifacts<Vec<[f64; 2]>>),
}

impl Terminal {
    pub fn summary(&self) -> &RunSummary {
        match self {
            Terminal::Discrete(a) => &a.summary,
            Terminal::Gaussian(a) => &a.summary,
            Terminal::Chain(a) => &a.summary,
        }
    }
}

/// Build the backend and reward a config describes and run it, writing all
/// artifacts under `out_dir` when given.
pub fn execute_run(cfg: &RunConfig, out_dir: Option<&Path>, baseline: bool) -> Result<Terminal> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    Ok(match &cfg.backend {
        BackendSpec::Discrete { .. } => {
            let b = cfg.discrete_backend()?;
            let p = cfg.pipeline(cfg.vector_reward()?)?;
            Terminal::Discrete(execute(cfg, &b, &p, out_dir, baseline)?)
        }
        BackendSpec::Gaussian { steps, rho, dim } => {
            let b = GaussianChainBackend::new(*steps, *rho, *dim)?;
            let p = cfg.pipeline(cfg.vector_reward()?)?;
            Terminal::Gaussian(execute(cfg, &b, &p, out_dir, baseline)?)
        }
        BackendSpec::ChainMol { length, steps } => {
            let b = ChainMolBackend::with_schedule(*length, *steps, ChainSchedule::default())?;
            let p = cfg.pipeline(cfg.chain_reward()?)?;
            Terminal::Chain(execute(cfg, &b, &p, out_dir, baseline)?)
        }
    })
}

/// Discrete reward table of a config.
pub fn table_values(cfg: &RunConfig) -> Result<Vec<f64>> {
    match &cfg.reward {
        RewardSpec::Table { values } => Ok(values.clone()),
        _ => Err(Error::config("oracle checks need backend=discrete with reward=table")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::DEFAULT_REFINER_TEMPERATURE;

    #[test]
    fn built_in_defaults() {
        let c = RunConfig::standard();
        assert_eq!(c.n_particles, 20);
        assert_eq!(c.tau, 10.0);
        assert_eq!(c.t_start, 50);
        assert_eq!(c.dt, 2);
        assert_eq!(c.potential, PotentialKind::Immediate);
        assert_eq!(c.backend, BackendSpec::ChainMol { length: 15, steps: 50 });
        assert!(!c.terminal_correction);
        assert_eq!(c.refiner_temperature, DEFAULT_REFINER_TEMPERATURE);
    }

    #[test]
    fn file_and_overrides_agree() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "tau = 3.5\npotential = \"difference\"\nbackend = \"discrete\"\nreward = \"table\"\nreward_table = [0, 1, 2, 3, 4]\nsteps = 8\nt_start = 8\n").unwrap();
        let from_file = RunConfig::resolve(Some(&path), &[]).unwrap();
        let from_flags = RunConfig::resolve(
            None,
            &[
                "tau=3.5", "potential=difference", "backend=discrete", "reward=table",
                "reward_table=0,1,2,3,4", "steps=8", "t_start=8",
            ]
            .map(String::from),
        )
        .unwrap();
        assert_eq!(from_file, from_flags);
        assert!(from_file.terminal_correction);
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "tau=0", "n_particles=0", "t_start=60", "dt=0", "n_evals=0", "potential=best",
            "bogus=1", "reward=linear", "refiner_temperature=-1",
        ] {
            let err = RunConfig::resolve(None, &[bad.to_string()]).unwrap_err();
            assert!(err.is_validation(), "{bad}: {err}");
        }
    }

    #[test]
    fn manifest_reproduces_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::resolve(None, &["seed=7".into(), "n_particles=4".into(), "steps=10".into(), "t_start=10".into()]).unwrap();
        let t = execute_run(&cfg, Some(dir.path()), false).unwrap();
        assert!(t.summary().mean_terminal_reward.is_some());
        let again = RunConfig::resolve(Some(&dir.path().join("run_manifest.json")), &[]).unwrap();
        assert_eq!(again.echo(), cfg.echo());
        for f in ["trajectory.csv", "events.csv", "terminal.csv", "rewards_long.csv", "diversity.csv", "ss_fractions.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }
}
