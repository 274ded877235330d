//! Ground-truth tilted laws for checking the engine.
//!
//! The discrete and Gaussian backends admit the tilted terminal law
//! `p*(x₀) ∝ p(x₀) e^{λ r(x₀)}` in closed form. For everything else a
//! self-normalised importance-sampling estimate over unguided samples is
//! provided, with a reliability flag based on its effective sample size.

use std::path::Path;

use crate::backend::DiscreteChainBackend;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::scalar::{log_sum_exp, Real};

/// SNIS estimates whose effective sample size falls below this are flagged.
pub const MIN_RELIABLE_ESS: f64 = 50.0;
pub const DEFAULT_BOOTSTRAP: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub enum TiltedMarginal<F> {
    Discrete { probs: Vec<F> },
    Gaussian { mean: F, variance: F },
}

impl<F: Real> TiltedMarginal<F> {
    pub fn probs(&self) -> Option<&[F]> {
        match self {
            TiltedMarginal::Discrete { probs } => Some(probs),
            TiltedMarginal::Gaussian { .. } => None,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        match self {
            TiltedMarginal::Discrete { probs } => {
                w.write_record(["state", "probability"])?;
                for (i, p) in probs.iter().enumerate() {
                    w.write_record([i.to_string(), p.to_string()])?;
                }
            }
            TiltedMarginal::Gaussian { mean, variance } => {
                w.write_record(["mean", "variance"])?;
                w.write_record([mean.to_string(), variance.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `π_T · K_T ⋯ K_1`, one vector-matrix product per step.
pub fn terminal_marginal<F: Real>(backend: &DiscreteChainBackend<F>) -> Vec<F> {
    use crate::backend::Backend;
    let s = backend.states();
    let mut p = backend.initial().to_vec();
    for t in (1..=Backend::<F>::steps(backend)).rev() {
        let k = backend.kernel(t);
        let mut next = vec![F::zero(); s];
        for (i, &pi) in p.iter().enumerate() {
            for (j, nj) in next.iter_mut().enumerate() {
                *nj = *nj + pi * k[i * s + j];
            }
        }
        p = next;
    }
    p
}

/// Exponentially tilt a discrete law. Zero-probability states stay at zero.
pub fn tilt<F: Real>(base: &[F], reward: &[F], lambda: F) -> Result<Vec<F>> {
    if base.len() != reward.len() {
        return Err(Error::input(format!(
            "reward has {} entries for {} states",
            reward.len(),
            base.len()
        )));
    }
    let logs: Vec<F> = base
        .iter()
        .zip(reward)
        .map(|(&p, &r)| {
            if p > F::zero() {
                p.ln() + lambda * r
            } else {
                F::neg_infinity()
            }
        })
        .collect();
    let z = log_sum_exp(&logs);
    Ok(logs.into_iter().map(|l| (l - z).exp()).collect())
}

pub fn exact_tilted_discrete<F: Real>(
    backend: &DiscreteChainBackend<F>,
    reward: &[F],
    lambda: F,
) -> Result<TiltedMarginal<F>> {
    Ok(TiltedMarginal::Discrete {
        probs: tilt(&terminal_marginal(backend), reward, lambda)?,
    })
}

/// Tilting `N(μ, σ²)` by `e^{λ a x}` gives `N(μ + λ a σ², σ²)`.
pub fn exact_tilted_gaussian<F: Real>(mean: F, variance: F, a: F, lambda: F) -> Result<TiltedMarginal<F>> {
    if !(variance > F::zero()) {
        return Err(Error::input(format!("variance must be positive, got {variance}")));
    }
    Ok(TiltedMarginal::Gaussian {
        mean: mean + lambda * a * variance,
        variance,
    })
}

/// `½ Σ |p - q|`.
pub fn tv_distance<F: Real>(p: &[F], q: &[F]) -> Result<F> {
    if p.len() != q.len() {
        return Err(Error::input(format!(
            "distributions have different supports ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    Ok(p.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum::<F>() * F::lit(0.5))
}

/// Weighted histogram of state indices.
pub fn empirical_distribution<F: Real>(samples: &[usize], weights: Option<&[F]>, states: usize) -> Result<Vec<F>> {
    let mut h = vec![F::zero(); states];
    for (i, &s) in samples.iter().enumerate() {
        if s >= states {
            return Err(Error::input(format!("state {s} outside 0..{states}")));
        }
        h[s] = h[s] + weights.map_or(F::one(), |w| w[i]);
    }
    let total: F = h.iter().copied().sum();
    if !(total > F::zero()) {
        return Err(Error::input("empty sample"));
    }
    Ok(h.into_iter().map(|x| x / total).collect())
}

/// Self-normalised importance-sampling summary of a tilted law.
#[derive(Clone, Debug, PartialEq)]
pub struct SnisEstimate<F> {
    pub weights: Vec<F>,
    pub ess: F,
    pub mean_reward: F,
    pub mean_reward_interval: (F, F),
    /// Weighted mean of each feature column.
    pub feature_means: Vec<F>,
    pub feature_intervals: Vec<(F, F)>,
    /// False when `ess` is below [`MIN_RELIABLE_ESS`].
    pub reliable: bool,
}

fn snis_weights<F: Real>(rewards: &[F], lambda: F) -> Vec<F> {
    let logs: Vec<F> = rewards.iter().map(|&r| lambda * r).collect();
    let z = log_sum_exp(&logs);
    logs.into_iter().map(|l| (l - z).exp()).collect()
}

fn weighted_means<F: Real>(idx: &[usize], w: &[F], rewards: &[F], features: &[Vec<F>], k: usize) -> (F, Vec<F>) {
    let mut total = F::zero();
    let mut r = F::zero();
    let mut f = vec![F::zero(); k];
    for &i in idx {
        total = total + w[i];
        r = r + w[i] * rewards[i];
        for (acc, &x) in f.iter_mut().zip(&features[i]) {
            *acc = *acc + w[i] * x;
        }
    }
    (r / total, f.into_iter().map(|x| x / total).collect())
}

fn percentile_interval<F: Real>(mut xs: Vec<F>) -> (F, F) {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = xs.len();
    let at = |q: f64| xs[((q * (n - 1) as f64).round() as usize).min(n - 1)];
    (at(0.025), at(0.975))
}

/// Reweight unguided terminal samples by `e^{λ r}`. `features` holds one
/// row per sample (e.g. class fractions or a one-hot state); intervals are
/// 95% percentile bootstrap intervals over `bootstrap` resamples.
pub fn snis_estimate<F: Real>(
    rewards: &[F],
    features: &[Vec<F>],
    lambda: F,
    bootstrap: usize,
    seed: u64,
) -> Result<SnisEstimate<F>> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::input("snis_estimate needs samples"));
    }
    if features.len() != n {
        return Err(Error::input("one feature row per sample required"));
    }
    let k = features[0].len();
    if features.iter().any(|f| f.len() != k) {
        return Err(Error::input("feature rows must share a length"));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::input("rewards must be finite"));
    }
    let weights = snis_weights(rewards, lambda);
    let ess = weights.iter().map(|&w| w * w).sum::<F>().recip();
    let all: Vec<usize> = (0..n).collect();
    let (mean_reward, feature_means) = weighted_means(&all, &weights, rewards, features, k);

    let (mean_reward_interval, feature_intervals) = if bootstrap > 0 {
        let mut rng = stream(seed, Purpose::Bootstrap, 0, 0, 0);
        let mut rs = Vec::with_capacity(bootstrap);
        let mut fs = vec![Vec::with_capacity(bootstrap); k];
        let mut idx = vec![0usize; n];
        for _ in 0..bootstrap {
            for i in idx.iter_mut() {
                *i = rand::Rng::random_range(&mut rng, 0..n);
            }
            let (r, f) = weighted_means(&idx, &weights, rewards, features, k);
            rs.push(r);
            for (col, x) in fs.iter_mut().zip(f) {
                col.push(x);
            }
        }
        (percentile_interval(rs), fs.into_iter().map(percentile_interval).collect())
    } else {
        ((mean_reward, mean_reward), feature_means.iter().map(|&m| (m, m)).collect())
    };

    Ok(SnisEstimate {
        weights,
        ess,
        mean_reward,
        mean_reward_interval,
        feature_means,
        feature_intervals,
        reliable: ess >= F::lit(MIN_RELIABLE_ESS),
    })
}

/// SNIS estimate of a tilted discrete law from unguided state samples.
pub fn snis_discrete<F: Real>(samples: &[usize], reward: &[F], lambda: F) -> Result<(TiltedMarginal<F>, F)> {
    let states = reward.len();
    if let Some(&s) = samples.iter().find(|&&s| s >= states) {
        return Err(Error::input(format!("state {s} outside 0..{states}")));
    }
    let rewards: Vec<F> = samples.iter().map(|&s| reward[s]).collect();
    let weights = snis_weights(&rewards, lambda);
    let ess = weights.iter().map(|&w| w * w).sum::<F>().recip();
    let probs = empirical_distribution(samples, Some(&weights), states)?;
    Ok((TiltedMarginal::Discrete { probs }, ess))
}
