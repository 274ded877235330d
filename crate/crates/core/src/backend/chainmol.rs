use rand::Rng;

use super::{Backend, BackendState, DEFAULT_STEPS};
use crate::error::{Error, Result};
use crate::geometry::{norm, signed_angle, sub, Point};
use crate::scalar::Real;

pub type Coords<F> = Vec<Point<F>>;

/// Hand-written planar chain energy: harmonic bonds plus a von Mises
/// mixture over signed turn angles.
///
/// `E = k Σ (|bᵢ| - ℓ)² - w Σⱼ ln Σₘ πₘ exp(κ (cos(θⱼ - μₘ) - 1))`
#[derive(Clone, Debug)]
pub struct ChainEnergy<F> {
    pub bond_k: F,
    pub bond_length: F,
    pub angle_weight: F,
    pub angle_kappa: F,
    /// `(πₘ, μₘ)` pairs, `μₘ` in radians.
    pub angle_modes: Vec<(F, F)>,
}

impl<F: Real> Default for ChainEnergy<F> {
    fn default() -> Self {
        let third = F::one() / F::lit(3.0);
        let helix = F::lit(55.0).to_radians();
        Self {
            bond_k: F::lit(2.0),
            bond_length: F::one(),
            angle_weight: F::one(),
            angle_kappa: F::lit(4.0),
            angle_modes: vec![(third, helix), (third, F::zero()), (third, -helix)],
        }
    }
}

impl<F: Real> ChainEnergy<F> {
    fn angle_terms(&self, theta: F) -> (F, F) {
        // returns (mixture density, d/dθ of the mixture density)
        let mut dens = F::zero();
        let mut ddens = F::zero();
        for &(pi, mu) in &self.angle_modes {
            let e = pi * (self.angle_kappa * ((theta - mu).cos() - F::one())).exp();
            dens = dens + e;
            ddens = ddens - e * self.angle_kappa * (theta - mu).sin();
        }
        (dens, ddens)
    }

    pub fn energy(&self, coords: &[Point<F>]) -> F {
        let mut e = F::zero();
        for w in coords.windows(2) {
            let d = norm(sub(w[1], w[0])) - self.bond_length;
            e = e + self.bond_k * d * d;
        }
        for w in coords.windows(3) {
            let theta = signed_angle(sub(w[1], w[0]), sub(w[2], w[1]));
            let (dens, _) = self.angle_terms(theta);
            e = e - self.angle_weight * dens.max(F::min_positive_value()).ln();
        }
        e
    }

    pub fn gradient(&self, coords: &[Point<F>]) -> Vec<Point<F>> {
        let two = F::lit(2.0);
        let mut g = vec![[F::zero(); 2]; coords.len()];
        for i in 0..coords.len().saturating_sub(1) {
            let b = sub(coords[i + 1], coords[i]);
            let len = norm(b);
            if len <= F::epsilon() {
                continue;
            }
            let s = two * self.bond_k * (len - self.bond_length) / len;
            for c in 0..2 {
                g[i + 1][c] = g[i + 1][c] + s * b[c];
                g[i][c] = g[i][c] - s * b[c];
            }
        }
        for j in 1..coords.len().saturating_sub(1) {
            let a = sub(coords[j], coords[j - 1]);
            let b = sub(coords[j + 1], coords[j]);
            let (a2, b2) = (a[0] * a[0] + a[1] * a[1], b[0] * b[0] + b[1] * b[1]);
            if a2 <= F::epsilon() || b2 <= F::epsilon() {
                continue;
            }
            let theta = signed_angle(a, b);
            let (dens, ddens) = self.angle_terms(theta);
            if dens <= F::min_positive_value() {
                continue;
            }
            let df = -self.angle_weight * ddens / dens;
            let dtheta_da = [a[1] / a2, -a[0] / a2];
            let dtheta_db = [-b[1] / b2, b[0] / b2];
            for c in 0..2 {
                g[j - 1][c] = g[j - 1][c] - df * dtheta_da[c];
                g[j][c] = g[j][c] + df * (dtheta_da[c] - dtheta_db[c]);
                g[j + 1][c] = g[j + 1][c] + df * dtheta_db[c];
            }
        }
        g
    }

    fn descend(&self, coords: &mut [Point<F>], step: F) {
        let g = self.gradient(coords);
        for (x, gx) in coords.iter_mut().zip(g) {
            x[0] = x[0] - step * gx[0];
            x[1] = x[1] - step * gx[1];
        }
    }
}

/// Linear drift ramp and geometric noise decay over the reverse steps.
#[derive(Clone, Copy, Debug)]
pub struct ChainSchedule<F> {
    /// Drift at `t = T`.
    pub eta_start: F,
    /// Drift at `t = 1`.
    pub eta_end: F,
    /// Noise at `t = T`.
    pub sigma_start: F,
    /// Noise at `t = 1`.
    pub sigma_end: F,
}

impl<F: Real> Default for ChainSchedule<F> {
    fn default() -> Self {
        Self {
            eta_start: F::lit(0.01),
            eta_end: F::lit(0.05),
            sigma_start: F::lit(0.5),
            sigma_end: F::lit(0.02),
        }
    }
}

impl<F: Real> ChainSchedule<F> {
    /// `(drift, noise)` tables indexed by `t - 1`.
    pub fn tables(&self, steps: usize) -> (Vec<F>, Vec<F>) {
        let span = F::from_count(steps.saturating_sub(1).max(1));
        let ratio = self.sigma_start / self.sigma_end;
        (1..=steps)
            .map(|t| {
                let frac = F::from_count(t - 1) / span;
                (
                    self.eta_end + (self.eta_start - self.eta_end) * frac,
                    self.sigma_end * ratio.powf(frac),
                )
            })
            .unzip()
    }
}

/// Toy backbone generator: annealed Langevin-style descent on
/// [`ChainEnergy`] from iid normal coordinates.
///
/// `x_{t-1} = x_t - η_t ∇E(x_t) + σ_t ε`. The proxy is the noise-free
/// descent rollout from `t` down to 0.
#[derive(Clone, Debug)]
pub struct ChainMolBackend<F> {
    length: usize,
    drift: Vec<F>,
    noise: Vec<F>,
    energy: ChainEnergy<F>,
}

impl<F: Real> ChainMolBackend<F> {
    pub fn new(length: usize, drift: Vec<F>, noise: Vec<F>, energy: ChainEnergy<F>) -> Result<Self> {
        if length < 2 {
            return Err(Error::input("chain needs at least 2 residues"));
        }
        if drift.is_empty() || drift.len() != noise.len() {
            return Err(Error::input("drift and noise schedules must be non-empty and equal length"));
        }
        if drift.iter().chain(&noise).any(|v| !v.is_finite() || *v < F::zero()) {
            return Err(Error::input("drift and noise must be finite and non-negative"));
        }
        if noise.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::input("noise must not increase toward t=0"));
        }
        Ok(Self {
            length,
            drift,
            noise,
            energy,
        })
    }

    pub fn with_schedule(length: usize, steps: usize, schedule: ChainSchedule<F>) -> Result<Self> {
        let (drift, noise) = schedule.tables(steps);
        Self::new(length, drift, noise, ChainEnergy::default())
    }

    pub fn with_defaults(length: usize) -> Result<Self> {
        Self::with_schedule(length, DEFAULT_STEPS, ChainSchedule::default())
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn energy(&self) -> &ChainEnergy<F> {
        &self.energy
    }

    /// `(η_t, σ_t)` for `1 ≤ t ≤ T`.
    pub fn schedule_at(&self, t: usize) -> (F, F) {
        (self.drift[t - 1], self.noise[t - 1])
    }
}

impl<F: Real> Backend<F> for ChainMolBackend<F> {
    type Payload = Coords<F>;
    type Proxy = Coords<F>;

    fn steps(&self) -> usize {
        self.drift.len()
    }

    fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> BackendState<Coords<F>> {
        BackendState {
            payload: (0..self.length)
                .map(|_| [F::standard_normal(rng), F::standard_normal(rng)])
                .collect(),
            t: self.steps(),
        }
    }

    fn transition<R: Rng + ?Sized>(&self, payload: &Coords<F>, t: usize, rng: &mut R) -> Coords<F> {
        let (eta, sigma) = self.schedule_at(t);
        let mut next = payload.clone();
        self.energy.descend(&mut next, eta);
        for x in &mut next {
            x[0] = x[0] + sigma * F::standard_normal(rng);
            x[1] = x[1] + sigma * F::standard_normal(rng);
        }
        next
    }

    fn predict_x0(&self, state: &BackendState<Coords<F>>) -> Coords<F> {
        let mut x = state.payload.clone();
        for s in (1..=state.t).rev() {
            self.energy.descend(&mut x, self.drift[s - 1]);
        }
        x
    }

    fn render(&self, payload: &Coords<F>) -> String {
        payload
            .iter()
            .map(|p| format!("{}:{}", p[0], p[1]))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
