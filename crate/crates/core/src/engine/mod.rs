//! The steering loop.
//!
//! Particles start from noise and are denoised from `t = T` down to `0`.
//! At every scheduled step (and always at `t = 0`) each particle's proxy is
//! scored, the potential is applied, and the ensemble is resampled back to
//! uniform weights. Every random draw comes from a keyed stream, so a run
//! is a pure function of its inputs and seed.

use std::path::Path;

use rayon::prelude::*;

use crate::backend::{Backend, BackendState};
use crate::error::{Error, Result};
use crate::potentials::{scale_reward, step_log_potential, PotentialSpec, RewardHistory};
use crate::resampling::{
    effective_sample_size, multiplicities, normalize_weights, resample_indices, ResampleMethod,
    ResampleSchedule, WeightError, WeightVector,
};
use crate::rewards::{Aggregation, EvalContext, Evaluation, RewardPipeline};
use crate::rng::{stream, Purpose};
use crate::scalar::Real;

mod log;

pub use log::{
    format_multiplicities, CsvLogSink, EventRecord, LogSink, NullSink, StepRecord, Tee,
    TrajectoryLog, EVENTS_HEADER, TRAJECTORY_HEADER,
};

/// Default number of independent re-evaluations used to score the terminal
/// ensemble.
pub const DEFAULT_TERMINAL_EVALS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Particle<P, F> {
    pub slot: usize,
    /// Initial particle this lineage descends from.
    pub root: usize,
    /// Slot at the previous resampling event this particle was copied from.
    pub ancestor: Option<usize>,
    pub state: BackendState<P>,
    pub history: RewardHistory<F>,
    /// Latest aggregated raw reward.
    pub reward: Option<F>,
    pub tokens: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteeringParams<F> {
    pub n_particles: usize,
    pub potential: PotentialSpec<F>,
    pub schedule: ResampleSchedule,
    pub method: ResampleMethod,
    pub seed: u64,
    /// When false, potentials are still applied and logged but particles
    /// are never resampled; the terminal ensemble is then weighted.
    pub resampling: bool,
    /// Score every step for the log; only scheduled steps steer.
    pub log_every_step: bool,
    /// Independent re-evaluations of each terminal particle (0 disables).
    pub terminal_evals: usize,
    /// Attach a rendered state to every log row.
    pub snapshots: bool,
}

impl<F: Real> SteeringParams<F> {
    pub fn new(
        n_particles: usize,
        potential: PotentialSpec<F>,
        schedule: ResampleSchedule,
        seed: u64,
    ) -> Self {
        Self {
            n_particles,
            potential,
            schedule,
            method: ResampleMethod::default(),
            seed,
            resampling: true,
            log_every_step: false,
            terminal_evals: DEFAULT_TERMINAL_EVALS,
            snapshots: false,
        }
    }
}

/// Terminal ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput<P, F> {
    pub particles: Vec<Particle<P, F>>,
    /// Uniform unless resampling was disabled.
    pub weights: WeightVector<F>,
    /// Independent terminal re-evaluation per particle, if a reward was given.
    pub assessment: Option<Vec<Evaluation<F>>>,
}

impl<P, F: Real> RunOutput<P, F> {
    pub fn payloads(&self) -> impl Iterator<Item = &P> {
        self.particles.iter().map(|p| &p.state.payload)
    }

    /// Mean of the independent terminal re-evaluations.
    pub fn mean_assessed_reward(&self) -> Option<F> {
        let a = self.assessment.as_ref()?;
        Some(a.iter().map(|e| e.value).sum::<F>() / F::from_count(a.len()))
    }

    pub fn tokens(&self) -> Option<Vec<String>> {
        self.particles.iter().map(|p| p.tokens.clone()).collect()
    }

    /// Write `terminal.csv`: slot, root, weight, rendered state, tokens,
    /// steering reward and assessed reward.
    pub fn write_terminal_csv<B>(&self, backend: &B, path: &Path) -> Result<()>
    where
        B: Backend<F, Payload = P>,
    {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["particle", "root", "weight", "state", "tokens", "reward", "assessed_reward"])?;
        for (i, p) in self.particles.iter().enumerate() {
            let assessed = self
                .assessment
                .as_ref()
                .map(|a| a[i].value.to_string())
                .unwrap_or_default();
            w.write_record([
                p.slot.to_string(),
                p.root.to_string(),
                self.weights.weights()[i].to_string(),
                backend.render(&p.state.payload),
                p.tokens.clone().unwrap_or_default(),
                p.reward.map(|r| r.to_string()).unwrap_or_default(),
                assessed,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Collect per-particle results, reporting the lowest-index failure so the
/// error does not depend on scheduling.
fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn weight_error(e: WeightError, t: usize) -> Error {
    match e {
        WeightError::Degenerate => Error::Degenerate { t },
        WeightError::Empty => Error::input("empty ensemble"),
        WeightError::NonFinite => Error::input(format!("non-finite log-potential at t={t}")),
    }
}

struct Engine<'a, F: Real, B: Backend<F>> {
    backend: &'a B,
    reward: Option<&'a RewardPipeline<F, B::Proxy>>,
    params: &'a SteeringParams<F>,
    guided: bool,
}

impl<F: Real, B: Backend<F>> Engine<'_, F, B> {
    fn validate(&self) -> Result<()> {
        let p = self.params;
        if p.n_particles == 0 {
            return Err(Error::config("n_particles must be at least 1"));
        }
        if p.schedule.t_start > self.backend.steps() || p.schedule.t_start == 0 {
            return Err(Error::config(format!(
                "t_start must lie in [1, {}], got {}",
                self.backend.steps(),
                p.schedule.t_start
            )));
        }
        if p.schedule.dt == 0 {
            return Err(Error::config("dt must be at least 1"));
        }
        if self.guided && self.reward.is_none() {
            return Err(Error::config("a steered run needs a reward"));
        }
        Ok(())
    }

    fn evaluate(&self, particles: &[Particle<B::Payload, F>], t: usize) -> Result<Vec<Evaluation<F>>> {
        let pipeline = self.reward.expect("reward checked by caller");
        let seed = self.params.seed;
        first_error(
            particles
                .par_iter()
                .map(|p| {
                    let ctx = EvalContext {
                        seed,
                        purpose: Purpose::Reward,
                        particle: p.slot,
                        t,
                        eval_index: 0,
                    };
                    pipeline.evaluate(&self.backend.predict_x0(&p.state), ctx)
                })
                .collect(),
        )
    }

    fn snapshot(&self, p: &Particle<B::Payload, F>) -> Option<String> {
        self.params
            .snapshots
            .then(|| self.backend.render(&p.state.payload))
    }

    fn run(&self, sink: &mut dyn LogSink<F>) -> Result<RunOutput<B::Payload, F>> {
        self.validate()?;
        let params = self.params;
        let n = params.n_particles;
        let steps = self.backend.steps();
        let seed = params.seed;

        let mut particles: Vec<Particle<B::Payload, F>> = (0..n)
            .into_par_iter()
            .map(|i| Particle {
                slot: i,
                root: i,
                ancestor: None,
                state: self
                    .backend
                    .sample_noise(&mut stream(seed, Purpose::Noise, i as u64, steps as u64, 0)),
                history: RewardHistory::new(),
                reward: None,
                tokens: None,
            })
            .collect();
        let mut weights = WeightVector::uniform(n);

        for t in (0..=steps).rev() {
            let scheduled = t == 0 || params.schedule.should_resample(t);
            let steer = self.guided && scheduled;
            let score = self.reward.is_some() && (scheduled || params.log_every_step);

            if score {
                let evals = self.evaluate(&particles, t)?;
                for (p, e) in particles.iter_mut().zip(&evals) {
                    p.reward = Some(e.value);
                    p.tokens = e.tokens.clone();
                }
            }

            if steer {
                let mut log_g = Vec::with_capacity(n);
                for p in &mut particles {
                    let raw = p.reward.expect("scored above");
                    p.history.push(scale_reward(raw, &params.potential));
                    let g = step_log_potential(&p.history, &params.potential, t == 0)?;
                    p.history.record_applied(g);
                    log_g.push(g);
                }
                let w = if params.resampling {
                    normalize_weights(&log_g)
                } else {
                    let applied: Vec<F> = particles.iter().map(|p| p.history.applied()).collect();
                    normalize_weights(&applied)
                }
                .map_err(|e| weight_error(e, t))?;

                let rows: Vec<StepRecord<F>> = particles
                    .iter()
                    .zip(&log_g)
                    .zip(w.weights())
                    .map(|((p, &g), &wi)| StepRecord {
                        t,
                        particle: p.slot,
                        ancestor: p.ancestor,
                        reward: p.reward.expect("scored above"),
                        log_potential: Some(g),
                        weight: wi,
                        tokens: p.tokens.clone(),
                        snapshot: self.snapshot(p),
                    })
                    .collect();
                sink.record_steps(&rows)?;

                if params.resampling {
                    let mut rng = stream(seed, Purpose::Resample, 0, t as u64, 0);
                    let ancestors = resample_indices(&w, params.method, &mut rng);
                    sink.record_event(&EventRecord {
                        t,
                        ess: effective_sample_size(&w),
                        entropy: w.entropy(),
                        multiplicities: multiplicities(&ancestors, n),
                    })?;
                    particles = ancestors
                        .iter()
                        .enumerate()
                        .map(|(j, &a)| Particle {
                            slot: j,
                            ancestor: Some(a),
                            ..particles[a].clone()
                        })
                        .collect();
                    weights = WeightVector::uniform(n);
                } else {
                    sink.record_event(&EventRecord {
                        t,
                        ess: effective_sample_size(&w),
                        entropy: w.entropy(),
                        multiplicities: vec![1; n],
                    })?;
                    weights = w;
                }
            } else if score {
                let uniform = F::one() / F::from_count(n);
                let rows: Vec<StepRecord<F>> = particles
                    .iter()
                    .map(|p| StepRecord {
                        t,
                        particle: p.slot,
                        ancestor: p.ancestor,
                        reward: p.reward.expect("scored above"),
                        log_potential: None,
                        weight: uniform,
                        tokens: p.tokens.clone(),
                        snapshot: self.snapshot(p),
                    })
                    .collect();
                sink.record_steps(&rows)?;
            }

            if t > 0 {
                particles = first_error(
                    particles
                        .into_par_iter()
                        .map(|mut p| {
                            let mut rng = stream(seed, Purpose::Denoise, p.slot as u64, t as u64, 0);
                            p.state = self.backend.denoise_step(&p.state, &mut rng)?;
                            Ok(p)
                        })
                        .collect(),
                )?;
            }
        }

        let assessment = match self.reward {
            Some(pipeline) if params.terminal_evals > 0 => Some(first_error(
                particles
                    .par_iter()
                    .map(|p| {
                        let ctx = EvalContext {
                            seed,
                            purpose: Purpose::TerminalEval,
                            particle: p.slot,
                            t: 0,
                            eval_index: 0,
                        };
                        pipeline.evaluate_with(
                            &self.backend.predict_x0(&p.state),
                            ctx,
                            params.terminal_evals,
                            Aggregation::Mean,
                        )
                    })
                    .collect(),
            )?),
            _ => None,
        };

        Ok(RunOutput {
            particles,
            weights,
            assessment,
        })
    }
}

/// Steered run, streaming the log into `sink`.
pub fn run_steered_with<F, B>(
    backend: &B,
    reward: &RewardPipeline<F, B::Proxy>,
    params: &SteeringParams<F>,
    sink: &mut dyn LogSink<F>,
) -> Result<RunOutput<B::Payload, F>>
where
    F: Real,
    B: Backend<F>,
{
    Engine {
        backend,
        reward: Some(reward),
        params,
        guided: true,
    }
    .run(sink)
}

/// Steered run with an in-memory log.
pub fn run_steered<F, B>(
    backend: &B,
    reward: &RewardPipeline<F, B::Proxy>,
    params: &SteeringParams<F>,
) -> Result<(RunOutput<B::Payload, F>, TrajectoryLog<F>)>
where
    F: Real,
    B: Backend<F>,
{
    let mut log = TrajectoryLog::new();
    let out = run_steered_with(backend, reward, params, &mut log)?;
    Ok((out, log))
}

/// The same loop without resampling. A reward, if given, is only logged at
/// the steps a steered run would use, and scores the terminal ensemble.
pub fn run_unguided_with<F, B>(
    backend: &B,
    reward: Option<&RewardPipeline<F, B::Proxy>>,
    params: &SteeringParams<F>,
    sink: &mut dyn LogSink<F>,
) -> Result<RunOutput<B::Payload, F>>
where
    F: Real,
    B: Backend<F>,
{
    Engine {
        backend,
        reward,
        params,
        guided: false,
    }
    .run(sink)
}

pub fn run_unguided<F, B>(
    backend: &B,
    reward: Option<&RewardPipeline<F, B::Proxy>>,
    params: &SteeringParams<F>,
) -> Result<(RunOutput<B::Payload, F>, TrajectoryLog<F>)>
where
    F: Real,
    B: Backend<F>,
{
    let mut log = TrajectoryLog::new();
    let out = run_unguided_with(backend, reward, params, &mut log)?;
    Ok((out, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::DiscreteChainBackend;
    use crate::potentials::PotentialKind;
    use crate::rewards::{RewardFunction, Scored, TableReward};
    use rand_chacha::ChaCha8Rng;

    fn backend() -> DiscreteChainBackend<f64> {
        DiscreteChainBackend::random(4, 6, &mut stream(9, Purpose::Backend, 0, 0, 0)).unwrap()
    }

    fn table(values: Vec<f64>) -> RewardPipeline<f64, Vec<f64>> {
        RewardPipeline::single(Box::new(TableReward { values }))
    }

    fn params(n: usize, kind: PotentialKind) -> SteeringParams<f64> {
        SteeringParams::new(
            n,
            PotentialSpec::new(kind, 1.0).unwrap(),
            ResampleSchedule::new(6, 2, 6).unwrap(),
            5,
        )
    }

    #[test]
    fn logs_one_row_per_particle_at_each_event() {
        let b = backend();
        let (out, log) = run_steered(&b, &table(vec![0.0, 1.0, 2.0, 3.0]), &params(7, PotentialKind::Immediate)).unwrap();
        assert_eq!(out.particles.len(), 7);
        assert_eq!(log.logged_steps(), vec![6, 4, 2, 0]);
        assert_eq!(log.steps.len(), 28);
        assert_eq!(log.events.len(), 4);
        for e in &log.events {
            assert_eq!(e.multiplicities.iter().sum::<usize>(), 7);
            assert!(e.ess >= 1.0 - 1e-12 && e.ess <= 7.0 + 1e-12);
        }
        assert!(log.rows_at(6).all(|r| r.ancestor.is_none()));
        assert!(log.rows_at(4).all(|r| r.ancestor.is_some()));
        assert!(out.particles.iter().all(|p| p.state.t == 0));
    }

    #[test]
    fn unguided_never_resamples() {
        let b = backend();
        let reward = table(vec![0.0, 1.0, 2.0, 3.0]);
        let (out, log) = run_unguided(&b, Some(&reward), &params(5, PotentialKind::Immediate)).unwrap();
        assert!(log.events.is_empty());
        assert_eq!(log.logged_steps(), vec![6, 4, 2, 0]);
        assert!(out.particles.iter().enumerate().all(|(i, p)| p.root == i && p.ancestor.is_none()));
        assert!(log.steps.iter().all(|r| r.log_potential.is_none()));
    }

    #[test]
    fn states_before_onset_match_unguided() {
        let b = backend();
        let reward = table(vec![0.0, 5.0, 0.0, 5.0]);
        let mut p = params(6, PotentialKind::Immediate);
        p.snapshots = true;
        p.log_every_step = true;
        let (_, guided) = run_steered(&b, &reward, &p).unwrap();
        let (_, plain) = run_unguided(&b, Some(&reward), &p).unwrap();
        let g: Vec<_> = guided.rows_at(6).map(|r| r.snapshot.clone()).collect();
        let u: Vec<_> = plain.rows_at(6).map(|r| r.snapshot.clone()).collect();
        assert_eq!(g, u);
    }

    #[test]
    fn single_particle_is_a_plain_rollout() {
        let b = backend();
        let (steered, _) = run_steered(&b, &table(vec![0.0, 1.0, 2.0, 3.0]), &params(1, PotentialKind::Sum)).unwrap();
        let (plain, _) = run_unguided(&b, None, &params(1, PotentialKind::Sum)).unwrap();
        assert_eq!(steered.particles[0].state, plain.particles[0].state);
    }

    #[test]
    fn all_minus_infinity_is_degenerate() {
        struct Impossible;
        impl RewardFunction<f64, Vec<f64>> for Impossible {
            fn score(&self, _: &Vec<f64>, _: &EvalContext, _: &mut ChaCha8Rng) -> Result<Scored<f64>> {
                Ok(Scored::plain(f64::NEG_INFINITY))
            }
            fn is_stochastic(&self) -> bool {
                false
            }
        }
        let b = backend();
        let err = run_steered(&b, &RewardPipeline::single(Box::new(Impossible)), &params(3, PotentialKind::Immediate))
            .unwrap_err();
        assert!(matches!(err, Error::Degenerate { t: 6 }));
    }

    #[test]
    fn disabled_resampling_accumulates_weights() {
        let b = backend();
        let mut p = params(8, PotentialKind::Difference);
        p.resampling = false;
        let (out, log) = run_steered(&b, &table(vec![0.0, 1.0, 2.0, 3.0]), &p).unwrap();
        for part in &out.particles {
            let total: f64 = log
                .steps
                .iter()
                .filter(|r| r.particle == part.slot)
                .map(|r| r.log_potential.unwrap())
                .sum();
            assert!((total - part.reward.unwrap()).abs() < 1e-12);
        }
        let expected = normalize_weights(&out.particles.iter().map(|p| p.reward.unwrap()).collect::<Vec<_>>()).unwrap();
        for (a, b) in out.weights.weights().iter().zip(expected.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let b = backend();
        let reward = table(vec![0.0; 4]);
        let mut p = params(0, PotentialKind::Immediate);
        assert!(run_steered(&b, &reward, &p).unwrap_err().is_validation());
        p.n_particles = 2;
        p.schedule.t_start = 9;
        assert!(run_steered(&b, &reward, &p).unwrap_err().is_validation());
    }
}
