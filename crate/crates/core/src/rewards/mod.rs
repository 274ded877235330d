//! Reward evaluation pipeline.
//!
//! A [`RewardFunction`] scores one denoised proxy, possibly through a
//! stochastic refinement step. [`RewardPipeline`] repeats the evaluation
//! `n_evals` times on independent streams and aggregates by mean or max.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::scalar::Real;

mod chain;
mod refine;
pub mod worker;

pub use chain::{
    classify_ss, default_binding_target, load_target_csv, reward_binding, reward_charge,
    reward_ss, ChainReward, ChainRewardKind, SecondaryStructureTargets, SsClass, SsFractions,
    BIND_CUTOFF, BIND_SOFT_CORE, GEOMETRY_BLEND, SEQUENCE_BLEND,
};
pub use refine::{
    project_bonds, refine, sequence_fractions, RefinedPair, Token, DEFAULT_REFINER_TEMPERATURE,
    PROJECTION_ITERATIONS,
};
pub use worker::{ExternalReward, WorkerHandle};

/// Where an evaluation happens; used to key its random stream and to label
/// worker failures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalContext {
    pub seed: u64,
    pub purpose: Purpose,
    pub particle: usize,
    pub t: usize,
    pub eval_index: usize,
}

impl EvalContext {
    pub fn rng(&self) -> ChaCha8Rng {
        stream(
            self.seed,
            self.purpose,
            self.particle as u64,
            self.t as u64,
            self.eval_index as u64,
        )
    }
}

/// One scored realisation.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored<F> {
    pub value: F,
    /// Sequence of the refined pair, when the reward refines.
    pub tokens: Option<String>,
}

impl<F> Scored<F> {
    pub fn plain(value: F) -> Self {
        Self {
            value,
            tokens: None,
        }
    }
}

pub trait RewardFunction<F: Real, P>: Send + Sync {
    fn score(&self, proxy: &P, ctx: &EvalContext, rng: &mut ChaCha8Rng) -> Result<Scored<F>>;

    /// Deterministic rewards are evaluated once regardless of `n_evals`.
    fn is_stochastic(&self) -> bool;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
        }
    }

    pub fn apply<F: Real>(self, samples: &[F]) -> F {
        match self {
            Aggregation::Mean => {
                samples.iter().copied().sum::<F>() / F::from_count(samples.len())
            }
            Aggregation::Max => samples.iter().copied().fold(F::neg_infinity(), F::max),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            other => Err(Error::config(format!("unknown aggregation {other:?}; expected mean|max"))),
        }
    }
}

/// Aggregated result of `n_evals` evaluations.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation<F> {
    pub value: F,
    pub samples: Vec<F>,
    /// Tokens of the first realisation, if any.
    pub tokens: Option<String>,
}

pub struct RewardPipeline<F, P> {
    function: Box<dyn RewardFunction<F, P>>,
    n_evals: usize,
    aggregation: Aggregation,
}

impl<F: Real, P> RewardPipeline<F, P> {
    pub fn new(
        function: Box<dyn RewardFunction<F, P>>,
        n_evals: usize,
        aggregation: Aggregation,
    ) -> Result<Self> {
        if n_evals == 0 {
            return Err(Error::config("n_evals must be at least 1"));
        }
        Ok(Self {
            function,
            n_evals,
            aggregation,
        })
    }

    pub fn single(function: Box<dyn RewardFunction<F, P>>) -> Self {
        Self {
            function,
            n_evals: 1,
            aggregation: Aggregation::Mean,
        }
    }

    pub fn n_evals(&self) -> usize {
        self.n_evals
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    pub fn function(&self) -> &dyn RewardFunction<F, P> {
        self.function.as_ref()
    }

    /// Evaluate with the configured repetition count.
    pub fn evaluate(&self, proxy: &P, base: EvalContext) -> Result<Evaluation<F>> {
        self.evaluate_with(proxy, base, self.n_evals, self.aggregation)
    }

    /// Evaluate with an explicit repetition count and aggregation. Eval
    /// `i` always uses the stream keyed by `eval_index = i`.
    pub fn evaluate_with(
        &self,
        proxy: &P,
        base: EvalContext,
        n_evals: usize,
        aggregation: Aggregation,
    ) -> Result<Evaluation<F>> {
        let n = if self.function.is_stochastic() { n_evals.max(1) } else { 1 };
        let mut samples = Vec::with_capacity(n);
        let mut tokens = None;
        for i in 0..n {
            let ctx = EvalContext { eval_index: i, ..base };
            let scored = self.function.score(proxy, &ctx, &mut ctx.rng())?;
            if i == 0 {
                tokens = scored.tokens;
            }
            samples.push(scored.value);
        }
        Ok(Evaluation {
            value: aggregation.apply(&samples),
            samples,
            tokens,
        })
    }
}

/// Expected table reward under the posterior proxy of the discrete backend.
#[derive(Clone, Debug)]
pub struct TableReward<F> {
    pub values: Vec<F>,
}

impl<F: Real> RewardFunction<F, Vec<F>> for TableReward<F> {
    fn score(&self, proxy: &Vec<F>, _ctx: &EvalContext, _rng: &mut ChaCha8Rng) -> Result<Scored<F>> {
        if proxy.len() != self.values.len() {
            return Err(Error::input(format!(
                "reward table has {} entries but the proxy has {}",
                self.values.len(),
                proxy.len()
            )));
        }
        let mut acc = F::zero();
        for (&p, &r) in proxy.iter().zip(&self.values) {
            // zero-probability states never contribute, even with infinite rewards
            if p > F::zero() {
                acc = acc + p * r;
            }
        }
        Ok(Scored::plain(acc))
    }

    fn is_stochastic(&self) -> bool {
        false
    }
}

/// `slope · Σᵢ xᵢ` on a real-vector proxy.
#[derive(Clone, Copy, Debug)]
pub struct LinearReward<F> {
    pub slope: F,
}

impl<F: Real> RewardFunction<F, Vec<F>> for LinearReward<F> {
    fn score(&self, proxy: &Vec<F>, _ctx: &EvalContext, _rng: &mut ChaCha8Rng) -> Result<Scored<F>> {
        Ok(Scored::plain(self.slope * proxy.iter().copied().sum::<F>()))
    }

    fn is_stochastic(&self) -> bool {
        false
    }
}
