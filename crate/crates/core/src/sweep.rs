//! One-axis parameter sweeps in triplicate.

use std::path::Path;

use serde::Serialize;

use crate::config::{execute_run, RunConfig, RunSummary};
use crate::error::{Error, Result};

pub const SWEEP_AXES: [&str; 6] = ["n_particles", "tau", "t_start", "dt", "potential", "n_evals"];
pub const SWEEP_SEEDS: u64 = 3;

#[derive(Clone, Debug, Serialize)]
pub struct SweepCell {
    pub value: String,
    pub seed: u64,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValueSummary {
    pub value: String,
    pub completed: usize,
    pub failed: usize,
    pub mean_terminal_reward: Option<f64>,
    pub mean_terminal_diversity: Option<f64>,
    pub mean_baseline_reward: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub axis: String,
    pub cells: Vec<SweepCell>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl SweepReport {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    /// Seed-averaged summary per swept value, in sweep order.
    pub fn by_value(&self) -> Vec<ValueSummary> {
        let mut values: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !values.contains(&c.value.as_str()) {
                values.push(&c.value);
            }
        }
        values
            .into_iter()
            .map(|v| {
                let ok: Vec<&RunSummary> = self
                    .cells
                    .iter()
                    .filter(|c| c.value == v)
                    .filter_map(|c| c.summary.as_ref())
                    .collect();
                let total = self.cells.iter().filter(|c| c.value == v).count();
                ValueSummary {
                    value: v.to_string(),
                    completed: ok.len(),
                    failed: total - ok.len(),
                    mean_terminal_reward: mean(ok.iter().filter_map(|s| s.mean_terminal_reward)),
                    mean_terminal_diversity: mean(ok.iter().filter_map(|s| s.terminal_diversity)),
                    mean_baseline_reward: mean(ok.iter().filter_map(|s| s.baseline_mean_terminal_reward)),
                }
            })
            .collect()
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_path(dir.join("sweep_runs.csv"))?;
        w.write_record([
            "axis", "value", "seed", "status", "mean_terminal_reward", "terminal_diversity",
            "baseline_mean_terminal_reward", "error",
        ])?;
        for c in &self.cells {
            let s = c.summary.as_ref();
            w.write_record([
                self.axis.clone(),
                c.value.clone(),
                c.seed.to_string(),
                if c.error.is_some() { "failed" } else { "ok" }.to_string(),
                opt(s.and_then(|s| s.mean_terminal_reward)),
                opt(s.and_then(|s| s.terminal_diversity)),
                opt(s.and_then(|s| s.baseline_mean_terminal_reward)),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("sweep_summary.csv"))?;
        w.write_record([
            "axis", "value", "completed", "failed", "mean_terminal_reward", "mean_terminal_diversity",
            "mean_baseline_reward",
        ])?;
        for v in self.by_value() {
            w.write_record([
                self.axis.clone(),
                v.value,
                v.completed.to_string(),
                v.failed.to_string(),
                opt(v.mean_terminal_reward),
                opt(v.mean_terminal_diversity),
                opt(v.mean_baseline_reward),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Run every value of `axis` with seeds `base.seed .. base.seed + 3`,
/// everything else held at `base`. A failing cell is recorded and the sweep
/// continues.
pub fn run_sweep(
    base: &RunConfig,
    axis: &str,
    values: &[String],
    out_dir: Option<&Path>,
    baseline: bool,
) -> Result<SweepReport> {
    if !SWEEP_AXES.contains(&axis) {
        return Err(Error::config(format!(
            "cannot sweep {axis:?}; allowed axes: {}",
            SWEEP_AXES.join(", ")
        )));
    }
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    let mut cells = Vec::new();
    for value in values {
        for seed in base.seed..base.seed + SWEEP_SEEDS {
            let dir = out_dir.map(|d| d.join(format!("{axis}={value}")).join(format!("seed{seed}")));
            let outcome = base
                .with_overrides(&[format!("{axis}={value}"), format!("seed={seed}")])
                .and_then(|cfg| execute_run(&cfg, dir.as_deref(), baseline));
            let (summary, error) = match outcome {
                Ok(t) => (Some(t.summary().clone()), None),
                Err(e) => (None, Some(format!("{axis}={value} seed={seed}: {e}"))),
            };
            cells.push(SweepCell {
                value: value.clone(),
                seed,
                summary,
                error,
            });
        }
    }
    let report = SweepReport {
        axis: axis.to_string(),
        cells,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        report.write_csv(dir)?;
    }
    Ok(report)
}
