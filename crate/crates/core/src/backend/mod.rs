//! Reverse-diffusion backends.
//!
//! A backend owns the noise law `p(x_T)`, the reverse kernels
//! `p(x_{t-1} | x_t)` and a deterministic denoised proxy `x̂₀|t`. All three
//! toy backends here have generative laws that are known exactly or in
//! closed form, which is what the oracle tests lean on.

use std::fmt::Debug;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

mod chainmol;
mod discrete;
mod gaussian;

pub use chainmol::{ChainEnergy, ChainMolBackend, ChainSchedule, Coords};
pub use discrete::DiscreteChainBackend;
pub use gaussian::GaussianChainBackend;

/// Default number of reverse steps for every toy backend.
pub const DEFAULT_STEPS: usize = 50;

/// A payload at diffusion time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct BackendState<P> {
    pub payload: P,
    pub t: usize,
}

pub trait Backend<F: Real>: Send + Sync {
    type Payload: Clone + PartialEq + Debug + Send + Sync;
    type Proxy: Clone + Debug + Send + Sync;

    /// Total number of reverse steps `T`.
    fn steps(&self) -> usize;

    /// Draw `x_T` from the noise law.
    fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> BackendState<Self::Payload>;

    /// Draw `x_{t-1}` given `x_t = payload`. Callers guarantee `t >= 1`.
    fn transition<R: Rng + ?Sized>(&self, payload: &Self::Payload, t: usize, rng: &mut R)
        -> Self::Payload;

    /// Deterministic prediction of the terminal state from `state`.
    fn predict_x0(&self, state: &BackendState<Self::Payload>) -> Self::Proxy;

    /// Single-cell text rendering of a payload, used for `terminal.csv`.
    fn render(&self, payload: &Self::Payload) -> String;

    /// One reverse step. The terminal state cannot be denoised.
    fn denoise_step<R: Rng + ?Sized>(
        &self,
        state: &BackendState<Self::Payload>,
        rng: &mut R,
    ) -> Result<BackendState<Self::Payload>> {
        if state.t == 0 {
            return Err(Error::input("cannot denoise a terminal (t=0) state"));
        }
        Ok(BackendState {
            payload: self.transition(&state.payload, state.t, rng),
            t: state.t - 1,
        })
    }
}

/// Inverse-CDF draw from a probability vector given `u ∈ [0, 1)`.
pub(crate) fn categorical_index<F: Real>(probs: &[F], u: F) -> usize {
    let mut acc = F::zero();
    for (i, &p) in probs.iter().enumerate() {
        acc = acc + p;
        if u < acc {
            return i;
        }
    }
    // rounding left `u` past the final cumulative sum: take the last nonzero entry
    probs.iter().rposition(|&p| p > F::zero()).unwrap_or(probs.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categorical_index_inverts_cdf() {
        let p = [0.2f64, 0.0, 0.5, 0.3];
        assert_eq!(categorical_index(&p, 0.0), 0);
        assert_eq!(categorical_index(&p, 0.19), 0);
        assert_eq!(categorical_index(&p, 0.2), 2);
        assert_eq!(categorical_index(&p, 0.69), 2);
        assert_eq!(categorical_index(&p, 0.99), 3);
        // past the end never lands on a zero-probability entry
        assert_eq!(categorical_index(&[0.5f64, 0.5, 0.0], 1.0), 1);
    }
}
