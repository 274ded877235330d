//! Command-line front end.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{execute_run, read_config_file, parse_overrides, table_values, RunConfig, Terminal};
use crate::engine::{StepRecord, TrajectoryLog};
use crate::error::{Error, Result};
use crate::oracle::{empirical_distribution, exact_tilted_discrete, tv_distance};
use crate::reporting::{diversity_curve, reward_trajectory_table, write_diversity_csv, write_rewards_long_csv};
use crate::rewards::worker::{serve_echo, EchoMode};
use crate::sweep::run_sweep;

#[derive(Debug, Parser)]
#[command(name = "fksteer", version, about = "Particle steering of reverse-diffusion samplers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config file (or a previous run_manifest.json).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EchoKind {
    Zero,
    Charge,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steered run, optionally with the paired unguided baseline.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        baseline: bool,
    },
    /// Vary one parameter over three seeds per value.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        baseline: bool,
    },
    /// Compare a discrete steered run with the exact tilted law.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Rebuild summary tables from a run directory.
    Report {
        /// Directory holding trajectory.csv.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the reward-worker protocol on stdin/stdout.
    WorkerEcho {
        #[arg(long, value_enum, default_value = "zero")]
        mode: EchoKind,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        q_star: i32,
        /// Exit without replying after this many answered requests.
        #[arg(long)]
        die_after: Option<usize>,
    },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Tolerance(_) => EXIT_TOLERANCE,
        e if e.is_validation() => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::InvalidInput(_) => "invalid_input",
        Error::Degenerate { .. } => "degenerate",
        Error::Worker { .. } => "worker",
        Error::WorkerStartup(_) => "worker_startup",
        Error::Tolerance(_) => "tolerance",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
    }
}

/// One-line JSON error record.
pub fn error_record(e: &Error) -> String {
    serde_json::json!({
        "error": error_kind(e),
        "exit_code": exit_code(e),
        "message": e.to_string(),
    })
    .to_string()
}

fn resolve(common: &Common, layer: BTreeMap<String, String>) -> Result<RunConfig> {
    let mut map = layer;
    if let Some(path) = &common.config {
        map.extend(read_config_file(path)?);
    }
    map.extend(parse_overrides(&common.set)?);
    if let Some(seed) = common.seed {
        map.insert("seed".into(), seed.to_string());
    }
    RunConfig::from_map(&map)
}

fn out_dir(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

/// Built-in oracle scenario, applied beneath any config file.
pub fn oracle_defaults() -> BTreeMap<String, String> {
    [
        ("backend", "discrete"),
        ("reward", "table"),
        ("states", "5"),
        ("steps", "8"),
        ("t_start", "8"),
        ("dt", "1"),
        ("potential", "difference"),
        ("tau", "1"),
        ("n_particles", "100000"),
        ("terminal_evals", "0"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Outcome of an oracle comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCheck {
    pub tv: f64,
    pub tolerance: f64,
    pub exact: Vec<f64>,
    pub empirical: Vec<f64>,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.tv < self.tolerance
    }
}

pub fn oracle_check(cfg: &RunConfig) -> Result<OracleCheck> {
    let backend = cfg.discrete_backend()?;
    let values = table_values(cfg)?;
    if values.len() != backend.states() {
        return Err(Error::config(format!(
            "reward_table has {} entries for {} states",
            values.len(),
            backend.states()
        )));
    }
    if !cfg.terminal_correction {
        return Err(Error::config(
            "the exact tilt only holds with terminal_correction = true",
        ));
    }
    let exact = exact_tilted_discrete(&backend, &values, 1.0 / cfg.tau)?;
    let run = execute_run(cfg, None, false)?;
    let Terminal::Discrete(art) = run else {
        unreachable!("discrete config runs the discrete backend")
    };
    let samples: Vec<usize> = art.output.payloads().copied().collect();
    let empirical = empirical_distribution(&samples, Some(art.output.weights.weights()), backend.states())?;
    let exact = exact.probs().expect("discrete").to_vec();
    Ok(OracleCheck {
        tv: tv_distance(&exact, &empirical)?,
        tolerance: cfg.oracle_tolerance,
        exact,
        empirical,
    })
}

fn write_oracle_csv(path: &Path, check: &OracleCheck) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["state", "exact", "empirical"])?;
    for (i, (e, m)) in check.exact.iter().zip(&check.empirical).enumerate() {
        w.write_record([i.to_string(), e.to_string(), m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_opt<T: std::str::FromStr>(s: &str, what: &str) -> Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::input(format!("trajectory.csv: bad {what} {s:?}")))
}

/// Load `trajectory.csv` back into a log (events are not needed for reports).
pub fn read_trajectory_csv(path: &Path) -> Result<TrajectoryLog<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::input(format!("trajectory.csv lacks column {name}")))
    };
    let (ct, cp, cr, cw, ca, cg, ck, cs) = (
        col("t")?,
        col("particle")?,
        col("reward")?,
        col("weight")?,
        col("ancestor")?,
        col("log_potential")?,
        col("tokens")?,
        col("snapshot")?,
    );
    let mut log = TrajectoryLog::new();
    for rec in reader.records() {
        let rec = rec?;
        let text = |c: usize| rec.get(c).unwrap_or("").to_string();
        let req = |c: usize, what: &str| -> Result<f64> {
            parse_opt(&text(c), what)?.ok_or_else(|| Error::input(format!("trajectory.csv: missing {what}")))
        };
        log.steps.push(StepRecord {
            t: parse_opt(&text(ct), "t")?.ok_or_else(|| Error::input("trajectory.csv: missing t"))?,
            particle: parse_opt(&text(cp), "particle")?
                .ok_or_else(|| Error::input("trajectory.csv: missing particle"))?,
            ancestor: parse_opt(&text(ca), "ancestor")?,
            reward: req(cr, "reward")?,
            log_potential: parse_opt(&text(cg), "log_potential")?,
            weight: req(cw, "weight")?,
            tokens: Some(text(ck)).filter(|s| !s.is_empty()),
            snapshot: Some(text(cs)).filter(|s| !s.is_empty()),
        });
    }
    Ok(log)
}

fn cmd_report(run: &Path, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let log = read_trajectory_csv(&run.join("trajectory.csv"))?;
    let out = out.unwrap_or(run);
    std::fs::create_dir_all(out)?;
    let table = reward_trajectory_table(&log);
    write_rewards_long_csv(&out.join("rewards_long.csv"), &table)?;
    let curve = diversity_curve(&log)?;
    if !curve.is_empty() {
        write_diversity_csv(&out.join("diversity.csv"), &curve)?;
    }
    writeln!(stdout, "t,n,mean,std,diversity")?;
    for s in &table.summary {
        let d = curve
            .iter()
            .find(|(t, _)| *t == s.t)
            .map(|(_, d)| d.to_string())
            .unwrap_or_default();
        writeln!(stdout, "{},{},{},{},{}", s.t, s.count, s.mean, s.std, d)?;
    }
    Ok(())
}

/// Execute a parsed command. Output goes to `stdout`.
pub fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Run { common, baseline } => {
            let cfg = resolve(&common, BTreeMap::new())?;
            let dir = out_dir(&common, "fksteer-out");
            let t = execute_run(&cfg, Some(&dir), baseline)?;
            writeln!(stdout, "{}", serde_json::to_string(t.summary())?)?;
        }
        Command::Sweep {
            common,
            axis,
            values,
            baseline,
        } => {
            let cfg = resolve(&common, BTreeMap::new())?;
            let dir = out_dir(&common, "fksteer-sweep");
            let report = run_sweep(&cfg, &axis, &values, Some(&dir), baseline)?;
            for v in report.by_value() {
                writeln!(stdout, "{}", serde_json::to_string(&v)?)?;
            }
            if report.failed() > 0 {
                writeln!(stdout, "{} of {} runs failed", report.failed(), report.cells.len())?;
            }
        }
        Command::Oracle { common } => {
            let cfg = resolve(&common, oracle_defaults())?;
            let check = oracle_check(&cfg)?;
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)?;
                write_oracle_csv(&dir.join("oracle.csv"), &check)?;
            }
            let verdict = if check.passed() { "PASS" } else { "FAIL" };
            writeln!(stdout, "TV={:.4} {verdict}", check.tv)?;
            if !check.passed() {
                return Err(Error::Tolerance(format!(
                    "TV {:.4} is not below {}",
                    check.tv, check.tolerance
                )));
            }
        }
        Command::Report { run, out } => cmd_report(&run, out.as_deref(), stdout)?,
        Command::WorkerEcho {
            mode,
            q_star,
            die_after,
        } => {
            let mode = match mode {
                EchoKind::Zero => EchoMode::Zero,
                EchoKind::Charge => EchoMode::Charge { q_star },
            };
            let stdin = io::stdin();
            serve_echo(stdin.lock(), io::stdout().lock(), mode, die_after)?;
        }
    }
    Ok(())
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut out = io::stdout().lock();
    match dispatch(cli, &mut out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = out.flush();
            eprintln!("{}", error_record(&e));
            exit_code(&e)
        }
    }
}
