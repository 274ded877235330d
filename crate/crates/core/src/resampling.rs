//! Weight normalisation, resampling schedules and resampling with replacement.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Shifted log-potentials are clipped from below at this value before
/// exponentiation.
pub const LOG_WEIGHT_FLOOR: f64 = -1.0e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum WeightError {
    #[error("no log-potentials")]
    Empty,
    #[error("every log-potential is -inf")]
    Degenerate,
    #[error("log-potential is NaN or +inf")]
    NonFinite,
}

/// Normalised particle weights together with the log-potentials they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector<F> {
    weights: Vec<F>,
    log_potentials: Vec<F>,
}

impl<F: Real> WeightVector<F> {
    pub fn uniform(n: usize) -> Self {
        let w = F::one() / F::from_count(n.max(1));
        Self {
            weights: vec![w; n],
            log_potentials: vec![F::zero(); n],
        }
    }

    /// Wrap weights that already sum to one.
    pub fn from_normalized(weights: Vec<F>) -> Result<Self> {
        let sum: F = weights.iter().copied().sum();
        if weights.is_empty()
            || weights.iter().any(|w| !w.is_finite() || *w < F::zero())
            || (sum - F::one()).abs() > F::lit(1e-9).max(F::epsilon() * F::from_count(4 * weights.len()))
        {
            return Err(Error::input("weights must be non-negative and sum to 1"));
        }
        let log_potentials = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            log_potentials,
        })
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn log_potentials(&self) -> &[F] {
        &self.log_potentials
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Shannon entropy `-Σ wᵢ ln wᵢ` in nats.
    pub fn entropy(&self) -> F {
        -self
            .weights
            .iter()
            .filter(|w| **w > F::zero())
            .map(|&w| w * w.ln())
            .sum::<F>()
    }
}

/// Shift by the maximum, clip at [`LOG_WEIGHT_FLOOR`], exponentiate, normalise.
/// `-inf` entries get weight exactly zero.
pub fn normalize_weights<F: Real>(log_potentials: &[F]) -> Result<WeightVector<F>, WeightError> {
    if log_potentials.is_empty() {
        return Err(WeightError::Empty);
    }
    if log_potentials.iter().any(|g| g.is_nan() || *g == F::infinity()) {
        return Err(WeightError::NonFinite);
    }
    let max = log_potentials
        .iter()
        .copied()
        .fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() {
        return Err(WeightError::Degenerate);
    }
    let floor = F::lit(LOG_WEIGHT_FLOOR);
    let unnormalized: Vec<F> = log_potentials
        .iter()
        .map(|&g| {
            if g == F::neg_infinity() {
                F::zero()
            } else {
                (g - max).max(floor).exp()
            }
        })
        .collect();
    let total: F = unnormalized.iter().copied().sum();
    Ok(WeightVector {
        weights: unnormalized.into_iter().map(|w| w / total).collect(),
        log_potentials: log_potentials.to_vec(),
    })
}

/// `1 / Σ wᵢ²`, in `[1, N]`.
pub fn effective_sample_size<F: Real>(w: &WeightVector<F>) -> F {
    let sum_sq: F = w.weights.iter().map(|&x| x * x).sum();
    sum_sq.recip()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResampleMethod {
    #[default]
    Multinomial,
    Systematic,
}

impl ResampleMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ResampleMethod::Multinomial => "multinomial",
            ResampleMethod::Systematic => "systematic",
        }
    }
}

impl fmt::Display for ResampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResampleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "multinomial" => Ok(ResampleMethod::Multinomial),
            "systematic" => Ok(ResampleMethod::Systematic),
            other => Err(Error::config(format!(
                "unknown resample_method {other:?}; expected multinomial|systematic"
            ))),
        }
    }
}

fn cumulative<F: Real>(weights: &[F]) -> Vec<F> {
    weights
        .iter()
        .scan(F::zero(), |acc, &w| {
            *acc = *acc + w;
            Some(*acc)
        })
        .collect()
}

fn last_positive<F: Real>(weights: &[F]) -> usize {
    weights
        .iter()
        .rposition(|&w| w > F::zero())
        .unwrap_or(weights.len() - 1)
}

/// Ancestor index for each of the `N` output slots.
pub fn resample_indices<F: Real, R: Rng + ?Sized>(
    w: &WeightVector<F>,
    method: ResampleMethod,
    rng: &mut R,
) -> Vec<usize> {
    let n = w.len();
    let cdf = cumulative(&w.weights);
    let total = cdf[n - 1];
    let fallback = last_positive(&w.weights);
    let locate = |u: F| -> usize {
        let i = cdf.partition_point(|&c| c <= u);
        if i >= n {
            fallback
        } else {
            i
        }
    };
    match method {
        ResampleMethod::Multinomial => (0..n).map(|_| locate(F::unit(rng) * total)).collect(),
        ResampleMethod::Systematic => {
            let nf = F::from_count(n);
            let offset = F::unit(rng);
            (0..n)
                .map(|j| locate((F::from_count(j) + offset) / nf * total))
                .collect()
        }
    }
}

/// Draw `N` items with replacement according to `w`.
pub fn resample<T: Clone, F: Real, R: Rng + ?Sized>(
    items: &[T],
    w: &WeightVector<F>,
    method: ResampleMethod,
    rng: &mut R,
) -> Vec<T> {
    assert_eq!(items.len(), w.len(), "one weight per item");
    resample_indices(w, method, rng)
        .into_iter()
        .map(|i| items[i].clone())
        .collect()
}

/// Offspring count per input slot.
pub fn multiplicities(ancestors: &[usize], n: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n];
    for &a in ancestors {
        counts[a] += 1;
    }
    counts
}

/// Resample at `t` iff `t ≤ t_start` and `(t_start - t) mod Δt == 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResampleSchedule {
    pub t_start: usize,
    pub dt: usize,
}

impl ResampleSchedule {
    pub fn new(t_start: usize, dt: usize, steps: usize) -> Result<Self> {
        if t_start < 1 || t_start > steps {
            return Err(Error::config(format!(
                "t_start must lie in [1, {steps}], got {t_start}"
            )));
        }
        if dt < 1 {
            return Err(Error::config("dt must be at least 1"));
        }
        Ok(Self { t_start, dt })
    }

    pub fn should_resample(&self, t: usize) -> bool {
        t <= self.t_start && (self.t_start - t) % self.dt == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;

    #[test]
    fn two_particle_normalisation() {
        let w = normalize_weights(&[0.0f64, 2f64.ln()]).unwrap();
        assert!((w.weights()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w.weights()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn equal_potentials_are_uniform() {
        for c in [-700.0, 0.0, 3.3, 1e6] {
            let w = normalize_weights(&[c; 4]).unwrap();
            assert!(w.weights().iter().all(|&x| (x - 0.25f64).abs() < 1e-15));
        }
    }

    #[test]
    fn clipping_floor() {
        let w = normalize_weights(&[0.0f64, 5000.0]).unwrap();
        let expect0 = (-1000f64).exp() / (1.0 + (-1000f64).exp());
        assert_eq!(w.weights()[0], expect0);
        assert_eq!(w.weights()[1], 1.0);
    }

    #[test]
    fn neg_infinity_handling() {
        let w = normalize_weights(&[f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(w.weights(), &[0.0, 1.0]);
        assert_eq!(
            normalize_weights(&[f64::NEG_INFINITY; 3]),
            Err(WeightError::Degenerate)
        );
        assert_eq!(normalize_weights::<f64>(&[]), Err(WeightError::Empty));
        assert_eq!(normalize_weights(&[0.0, f64::NAN]), Err(WeightError::NonFinite));
    }

    #[test]
    fn ess_examples() {
        let uniform = WeightVector::<f64>::uniform(50);
        assert!((effective_sample_size(&uniform) - 50.0).abs() < 1e-9);
        let point = WeightVector::from_normalized(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(effective_sample_size(&point), 1.0);
        let half = WeightVector::from_normalized(vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!(effective_sample_size(&half), 2.0);
    }

    #[test]
    fn point_mass_copies_particle_zero() {
        let mut weights = vec![0.0f64; 8];
        weights[0] = 1.0;
        let w = WeightVector::from_normalized(weights).unwrap();
        for method in [ResampleMethod::Multinomial, ResampleMethod::Systematic] {
            let out = resample(&(0..8).collect::<Vec<_>>(), &w, method, &mut stream(1, Purpose::Resample, 0, 0, 0));
            assert_eq!(out, vec![0; 8]);
        }
    }

    #[test]
    fn systematic_uniform_is_a_permutation_of_identity() {
        let w = WeightVector::<f64>::uniform(37);
        for seed in 0..50 {
            let idx = resample_indices(&w, ResampleMethod::Systematic, &mut stream(seed, Purpose::Resample, 0, 0, 0));
            assert_eq!(idx, (0..37).collect::<Vec<_>>());
        }
    }

    #[test]
    fn multinomial_binomial_mean() {
        let w = WeightVector::from_normalized(vec![0.7f64, 0.3]).unwrap();
        let reps = 100_000u64;
        let total: usize = (0..reps)
            .map(|r| {
                let idx = resample_indices(&w, ResampleMethod::Multinomial, &mut stream(3, Purpose::Resample, r, 0, 0));
                idx.iter().filter(|&&i| i == 0).count()
            })
            .sum();
        let mean = total as f64 / reps as f64;
        assert!((mean - 1.4).abs() < 0.01, "mean count {mean}");
    }

    #[test]
    fn schedule_examples() {
        let s = ResampleSchedule::new(50, 2, 50).unwrap();
        assert!(s.should_resample(50));
        assert!(!s.should_resample(49));
        assert!(s.should_resample(0));
        let s = ResampleSchedule::new(20, 2, 50).unwrap();
        assert!(s.should_resample(20));
        assert!(!s.should_resample(22));
        assert!(ResampleSchedule::new(0, 2, 50).is_err());
        assert!(ResampleSchedule::new(51, 2, 50).is_err());
        assert!(ResampleSchedule::new(10, 0, 50).is_err());
    }

    #[test]
    fn entropy_of_uniform_is_log_n() {
        let w = WeightVector::<f64>::uniform(8);
        assert!((w.entropy() - 8f64.ln()).abs() < 1e-12);
    }

    fn arb_log_potentials() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-30.0f64..30.0, 1..64)
    }

    proptest! {
        #[test]
        fn normalisation_is_shift_invariant(g in arb_log_potentials(), c in -1e4f64..1e4) {
            let a = normalize_weights(&g).unwrap();
            let shifted: Vec<f64> = g.iter().map(|x| x + c).collect();
            let b = normalize_weights(&shifted).unwrap();
            for (x, y) in a.weights().iter().zip(b.weights()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let s: f64 = a.weights().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }

        #[test]
        fn ess_in_bounds(g in arb_log_potentials()) {
            let w = normalize_weights(&g).unwrap();
            let ess = effective_sample_size(&w);
            prop_assert!(ess >= 1.0 - 1e-9 && ess <= w.len() as f64 + 1e-9);
        }

        #[test]
        fn systematic_counts_within_one(g in arb_log_potentials(), seed in any::<u64>()) {
            let w = normalize_weights(&g).unwrap();
            let n = w.len();
            let idx = resample_indices(&w, ResampleMethod::Systematic, &mut stream(seed, Purpose::Resample, 0, 0, 0));
            for (i, c) in multiplicities(&idx, n).into_iter().enumerate() {
                prop_assert!((c as f64 - n as f64 * w.weights()[i]).abs() < 1.0 + 1e-9);
            }
        }

        #[test]
        fn resampling_never_fabricates(g in arb_log_potentials(), seed in any::<u64>(), sys in any::<bool>()) {
            let w = normalize_weights(&g).unwrap();
            let items: Vec<u64> = (0..w.len() as u64).map(|i| i * 7919).collect();
            let method = if sys { ResampleMethod::Systematic } else { ResampleMethod::Multinomial };
            let out = resample(&items, &w, method, &mut stream(seed, Purpose::Resample, 0, 0, 0));
            prop_assert_eq!(out.len(), items.len());
            for x in out {
                let i = items.iter().position(|&y| y == x);
                prop_assert!(i.is_some());
                prop_assert!(w.weights()[i.unwrap()] > 0.0);
            }
        }
    }
}
