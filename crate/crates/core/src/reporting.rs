//! Summary tables computed from run logs and terminal ensembles.

use std::path::Path;

use crate::engine::TrajectoryLog;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::rewards::{classify_ss, project_bonds, SsFractions, PROJECTION_ITERATIONS};
use crate::scalar::Real;

/// One minus the mean positional identity over all unordered pairs.
pub fn sequence_diversity<F: Real, S: AsRef<str>>(seqs: &[S]) -> Result<F> {
    if seqs.len() < 2 {
        return Err(Error::input("diversity needs at least two sequences"));
    }
    let chars: Vec<Vec<char>> = seqs.iter().map(|s| s.as_ref().chars().collect()).collect();
    let len = chars[0].len();
    if chars.iter().any(|c| c.len() != len) {
        return Err(Error::input("diversity needs sequences of equal length"));
    }
    if len == 0 {
        return Err(Error::input("diversity needs non-empty sequences"));
    }
    let n = chars.len();
    let mut matches = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            matches += chars[i].iter().zip(&chars[j]).filter(|(a, b)| a == b).count();
        }
    }
    let pairs = n * (n - 1) / 2;
    Ok(F::one() - F::from_count(matches) / F::from_count(pairs * len))
}

/// Diversity at every logged step where all particles carry tokens.
pub fn diversity_curve<F: Real>(log: &TrajectoryLog<F>) -> Result<Vec<(usize, F)>> {
    let mut out = Vec::new();
    for t in log.logged_steps() {
        let tokens: Option<Vec<&str>> = log.rows_at(t).map(|r| r.tokens.as_deref()).collect();
        match tokens {
            Some(seqs) if seqs.len() >= 2 => out.push((t, sequence_diversity(&seqs)?)),
            _ => {}
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardRow<F> {
    pub t: usize,
    pub particle: usize,
    pub reward: F,
    pub ancestor: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepSummary<F> {
    pub t: usize,
    pub count: usize,
    pub mean: F,
    /// Population standard deviation across particles.
    pub std: F,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardTable<F> {
    pub rows: Vec<RewardRow<F>>,
    pub summary: Vec<StepSummary<F>>,
}

impl<F: Real> RewardTable<F> {
    pub fn summary_at(&self, t: usize) -> Option<&StepSummary<F>> {
        self.summary.iter().find(|s| s.t == t)
    }
}

pub fn mean_std<F: Real>(xs: &[F]) -> (F, F) {
    let n = F::from_count(xs.len().max(1));
    let mean = xs.iter().copied().sum::<F>() / n;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<F>() / n;
    (mean, var.sqrt())
}

pub fn reward_trajectory_table<F: Real>(log: &TrajectoryLog<F>) -> RewardTable<F> {
    let rows = log
        .steps
        .iter()
        .map(|r| RewardRow {
            t: r.t,
            particle: r.particle,
            reward: r.reward,
            ancestor: r.ancestor,
        })
        .collect();
    let summary = log
        .logged_steps()
        .into_iter()
        .map(|t| {
            let rewards: Vec<F> = log.rows_at(t).map(|r| r.reward).collect();
            let (mean, std) = mean_std(&rewards);
            StepSummary {
                t,
                count: rewards.len(),
                mean,
                std,
            }
        })
        .collect();
    RewardTable { rows, summary }
}

/// Geometric class fractions of each design after bond projection.
pub fn ss_composition_table<F: Real, C: AsRef<[Point<F>]>>(designs: &[C]) -> Result<Vec<SsFractions<F>>> {
    designs
        .iter()
        .map(|c| classify_ss(&project_bonds(c.as_ref(), PROJECTION_ITERATIONS)))
        .collect()
}

pub fn write_diversity_csv<F: Real>(path: &Path, curve: &[(usize, F)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "diversity"])?;
    for (t, d) in curve {
        w.write_record([t.to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per (t, particle) plus the step mean and std.
pub fn write_rewards_long_csv<F: Real>(path: &Path, table: &RewardTable<F>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "particle", "reward", "ancestor", "step_mean", "step_std"])?;
    for r in &table.rows {
        let s = table.summary_at(r.t).expect("summary covers every logged step");
        w.write_record([
            r.t.to_string(),
            r.particle.to_string(),
            r.reward.to_string(),
            r.ancestor.map(|a| a.to_string()).unwrap_or_default(),
            s.mean.to_string(),
            s.std.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ss_fractions_csv<F: Real>(path: &Path, rows: &[SsFractions<F>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["design", "alpha", "beta", "loop"])?;
    for (i, f) in rows.iter().enumerate() {
        w.write_record([i.to_string(), f.alpha.to_string(), f.beta.to_string(), f.ell.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
