//! Steering potentials `G_t` and per-lineage reward bookkeeping.
//!
//! | kind       | `log G_t`                  | boundary               |
//! |------------|----------------------------|------------------------|
//! | immediate  | `r_t`                      | `G₀ = e^{r₀} / ∏ G_t`  |
//! | difference | `r_t - r_{t+1}`            | `G_T = 1`              |
//! | max        | `max_{s ≥ t} r_s`          | `G₀ = e^{r₀} / ∏ G_t`  |
//! | sum        | `Σ_{s ≥ t} r_s`            | `G₀ = e^{r₀} / ∏ G_t`  |
//!
//! Here `r_t = λ r(x̂₀|t)` with `λ = 1/τ`, and "s ≥ t" ranges over the
//! guided steps the lineage has visited. For the difference kind the reward
//! preceding the first guided step is taken as 0.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PotentialKind {
    Immediate,
    Difference,
    Max,
    Sum,
}

impl PotentialKind {
    pub const ALL: [PotentialKind; 4] = [
        PotentialKind::Immediate,
        PotentialKind::Difference,
        PotentialKind::Max,
        PotentialKind::Sum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PotentialKind::Immediate => "immediate",
            PotentialKind::Difference => "difference",
            PotentialKind::Max => "max",
            PotentialKind::Sum => "sum",
        }
    }
}

impl fmt::Display for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PotentialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PotentialKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown potential {s:?}; expected immediate|difference|max|sum"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialSpec<F> {
    pub kind: PotentialKind,
    pub tau: F,
    pub terminal_correction: bool,
}

impl<F: Real> PotentialSpec<F> {
    /// Terminal correction defaults to on for the difference kind only.
    pub fn new(kind: PotentialKind, tau: F) -> Result<Self> {
        Self::with_correction(kind, tau, kind == PotentialKind::Difference)
    }

    pub fn with_correction(kind: PotentialKind, tau: F, terminal_correction: bool) -> Result<Self> {
        if !(tau > F::zero()) || tau.is_nan() {
            return Err(Error::config(format!("tau must be positive, got {tau}")));
        }
        Ok(Self {
            kind,
            tau,
            terminal_correction,
        })
    }

    /// Guidance scale `λ = 1/τ`.
    pub fn lambda(&self) -> F {
        self.tau.recip()
    }
}

/// `λ · raw`.
pub fn scale_reward<F: Real>(raw: F, spec: &PotentialSpec<F>) -> F {
    raw / spec.tau
}

/// Scaled rewards seen along one lineage, newest last.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardHistory<F> {
    rewards: Vec<F>,
    running_max: F,
    running_sum: F,
    applied: F,
}

impl<F: Real> Default for RewardHistory<F> {
    fn default() -> Self {
        Self {
            rewards: Vec::new(),
            running_max: F::neg_infinity(),
            running_sum: F::zero(),
            applied: F::zero(),
        }
    }
}

impl<F: Real> RewardHistory<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rewards(rewards: &[F]) -> Self {
        let mut h = Self::new();
        for &r in rewards {
            h.push(r);
        }
        h
    }

    /// Append a scaled reward `r_t`.
    pub fn push(&mut self, scaled: F) {
        self.rewards.push(scaled);
        self.running_max = self.running_max.max(scaled);
        self.running_sum = self.running_sum + scaled;
    }

    /// Add an applied log-potential to the lineage total.
    pub fn record_applied(&mut self, log_potential: F) {
        self.applied = self.applied + log_potential;
    }

    pub fn rewards(&self) -> &[F] {
        &self.rewards
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn latest(&self) -> Option<F> {
        self.rewards.last().copied()
    }

    pub fn running_max(&self) -> F {
        self.running_max
    }

    pub fn running_sum(&self) -> F {
        self.running_sum
    }

    /// Cumulative log-potential applied to this lineage so far.
    pub fn applied(&self) -> F {
        self.applied
    }
}

/// `log G_t` for the newest entry of `history`.
pub fn log_potential<F: Real>(history: &RewardHistory<F>, spec: &PotentialSpec<F>) -> Result<F> {
    let current = history
        .latest()
        .ok_or_else(|| Error::input("log_potential needs a non-empty reward history"))?;
    Ok(match spec.kind {
        PotentialKind::Immediate => current,
        PotentialKind::Difference => {
            let n = history.rewards.len();
            let previous = if n >= 2 { history.rewards[n - 2] } else { F::zero() };
            current - previous
        }
        PotentialKind::Max => history.running_max,
        PotentialKind::Sum => history.running_sum,
    })
}

/// Log of the boundary potential `G₀ = e^{r₀} / ∏_{t≥1} G_t`: the newest
/// reward minus everything applied to the lineage before step 0.
pub fn terminal_log_correction<F: Real>(
    history: &RewardHistory<F>,
    _spec: &PotentialSpec<F>,
) -> Result<F> {
    let r0 = history
        .latest()
        .ok_or_else(|| Error::input("terminal correction needs the t=0 reward"))?;
    Ok(r0 - history.applied)
}

/// The log-potential the engine applies at a guided step: the boundary
/// correction at `t = 0` when enabled, the kind's own form otherwise.
pub fn step_log_potential<F: Real>(
    history: &RewardHistory<F>,
    spec: &PotentialSpec<F>,
    terminal: bool,
) -> Result<F> {
    if terminal && spec.terminal_correction {
        terminal_log_correction(history, spec)
    } else {
        log_potential(history, spec)
    }
}
