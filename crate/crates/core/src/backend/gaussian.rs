use rand::Rng;

use super::{Backend, BackendState, DEFAULT_STEPS};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Stationary AR(1) reverse chain `x_{t-1} = ρ x_t + √(1-ρ²) ε`.
///
/// Every marginal is standard normal per coordinate and `E[x₀ | x_t] = ρᵗ x_t`.
#[derive(Clone, Debug)]
pub struct GaussianChainBackend<F> {
    steps: usize,
    rho: F,
    dim: usize,
    innovation: F,
}

impl<F: Real> GaussianChainBackend<F> {
    pub fn new(steps: usize, rho: F, dim: usize) -> Result<Self> {
        if !(rho > F::zero() && rho <= F::one()) {
            return Err(Error::input(format!("rho must lie in (0, 1], got {rho}")));
        }
        if dim == 0 || steps == 0 {
            return Err(Error::input("gaussian backend needs dim >= 1 and steps >= 1"));
        }
        Ok(Self {
            steps,
            rho,
            dim,
            innovation: (F::one() - rho * rho).max(F::zero()).sqrt(),
        })
    }

    pub fn with_default_steps(rho: F, dim: usize) -> Result<Self> {
        Self::new(DEFAULT_STEPS, rho, dim)
    }

    pub fn rho(&self) -> F {
        self.rho
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl<F: Real> Backend<F> for GaussianChainBackend<F> {
    type Payload = Vec<F>;
    type Proxy = Vec<F>;

    fn steps(&self) -> usize {
        self.steps
    }

    fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> BackendState<Vec<F>> {
        BackendState {
            payload: (0..self.dim).map(|_| F::standard_normal(rng)).collect(),
            t: self.steps,
        }
    }

    fn transition<R: Rng + ?Sized>(&self, payload: &Vec<F>, _t: usize, rng: &mut R) -> Vec<F> {
        payload
            .iter()
            .map(|&x| self.rho * x + self.innovation * F::standard_normal(rng))
            .collect()
    }

    fn predict_x0(&self, state: &BackendState<Vec<F>>) -> Vec<F> {
        let shrink = self.rho.powi(state.t as i32);
        state.payload.iter().map(|&x| shrink * x).collect()
    }

    fn render(&self, payload: &Vec<F>) -> String {
        payload
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }
}
