use std::path::Path;

use rand::Rng;

use super::{categorical_index, Backend, BackendState};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Finite-state reverse chain with explicit kernels.
///
/// `kernel(t)[i * S + j] = p(x_{t-1} = j | x_t = i)`. The proxy at step `t`
/// is the full posterior over `x₀` given `x_t`, i.e. row `x_t` of
/// `K_t · K_{t-1} ⋯ K_1`.
#[derive(Clone, Debug)]
pub struct DiscreteChainBackend<F> {
    states: usize,
    initial: Vec<F>,
    kernels: Vec<Vec<F>>,
    // to_terminal[t] = K_t ⋯ K_1 (identity at t = 0)
    to_terminal: Vec<Vec<F>>,
}

fn stochastic_tolerance<F: Real>(len: usize) -> F {
    F::lit(1e-12).max(F::epsilon() * F::from_count(4 * len.max(1)))
}

fn check_distribution<F: Real>(row: &[F], what: &str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < F::zero()) {
        return Err(Error::input(format!("{what}: entries must be finite and non-negative")));
    }
    let sum: F = row.iter().copied().sum();
    if (sum - F::one()).abs() > stochastic_tolerance(row.len()) {
        return Err(Error::input(format!("{what}: sums to {sum}, expected 1")));
    }
    Ok(())
}

impl<F: Real> DiscreteChainBackend<F> {
    /// `kernels[t - 1]` holds `K_t` as a row-major `S × S` table.
    pub fn new(initial: Vec<F>, kernels: Vec<Vec<F>>) -> Result<Self> {
        let states = initial.len();
        if states == 0 {
            return Err(Error::input("discrete backend needs at least one state"));
        }
        if kernels.is_empty() {
            return Err(Error::input("discrete backend needs at least one kernel"));
        }
        check_distribution(&initial, "initial distribution")?;
        for (k, kernel) in kernels.iter().enumerate() {
            if kernel.len() != states * states {
                return Err(Error::input(format!(
                    "kernel K_{} has {} entries, expected {}",
                    k + 1,
                    kernel.len(),
                    states * states
                )));
            }
            for (i, row) in kernel.chunks_exact(states).enumerate() {
                check_distribution(row, &format!("kernel K_{} row {i}", k + 1))?;
            }
        }

        let mut to_terminal = Vec::with_capacity(kernels.len() + 1);
        let mut acc = identity(states);
        to_terminal.push(acc.clone());
        for kernel in &kernels {
            acc = mat_mul(kernel, &acc, states);
            to_terminal.push(acc.clone());
        }
        Ok(Self {
            states,
            initial,
            kernels,
            to_terminal,
        })
    }

    /// Every kernel row uniform over the `states` symbols.
    pub fn uniform(states: usize, steps: usize) -> Result<Self> {
        let p = F::one() / F::from_count(states.max(1));
        Self::new(vec![p; states], vec![vec![p; states * states]; steps])
    }

    /// Flat-Dirichlet random kernels and initial law.
    pub fn random<R: Rng + ?Sized>(states: usize, steps: usize, rng: &mut R) -> Result<Self> {
        let mut dirichlet = |n: usize| -> Vec<F> {
            let g: Vec<F> = (0..n)
                .map(|_| -(F::one() - F::unit(rng)).ln())
                .collect();
            let s: F = g.iter().copied().sum();
            g.into_iter().map(|x| x / s).collect()
        };
        let initial = dirichlet(states);
        let kernels = (0..steps)
            .map(|_| (0..states).flat_map(|_| dirichlet(states)).collect())
            .collect();
        Self::new(initial, kernels)
    }

    /// Load kernels from a header-less CSV of `T·S` rows and `S` columns.
    /// Rows are grouped per step, `K_1` first; row `i` of a block is the
    /// distribution of `x_{t-1}` given `x_t = i`. A missing initial law means
    /// uniform.
    pub fn from_csv(path: &Path, initial: Option<Vec<F>>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rows: Vec<Vec<F>> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|cell| {
                    cell.parse::<F>()
                        .map_err(|_| Error::input(format!("kernel file: bad number {cell:?}")))
                })
                .collect::<Result<Vec<F>>>()?;
            rows.push(row);
        }
        let states = rows.first().map(Vec::len).unwrap_or(0);
        if states == 0 || rows.len() % states != 0 {
            return Err(Error::input(format!(
                "kernel file: {} rows is not a multiple of the {states} columns",
                rows.len()
            )));
        }
        let kernels = rows
            .chunks(states)
            .map(|block| block.iter().flatten().copied().collect())
            .collect();
        let initial = initial
            .unwrap_or_else(|| vec![F::one() / F::from_count(states); states]);
        if initial.len() != states {
            return Err(Error::input("initial distribution length differs from kernel width"));
        }
        Self::new(initial, kernels)
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn initial(&self) -> &[F] {
        &self.initial
    }

    /// `K_t` for `1 ≤ t ≤ T`, row-major.
    pub fn kernel(&self, t: usize) -> &[F] {
        &self.kernels[t - 1]
    }

    /// Posterior over `x₀` given `x_t = state`.
    pub fn posterior(&self, state: usize, t: usize) -> &[F] {
        let s = self.states;
        &self.to_terminal[t][state * s..(state + 1) * s]
    }
}

fn identity<F: Real>(n: usize) -> Vec<F> {
    let mut m = vec![F::zero(); n * n];
    for i in 0..n {
        m[i * n + i] = F::one();
    }
    m
}

fn mat_mul<F: Real>(a: &[F], b: &[F], n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == F::zero() {
                continue;
            }
            for j in 0..n {
                out[i * n + j] = out[i * n + j] + aik * b[k * n + j];
            }
        }
    }
    out
}

impl<F: Real> Backend<F> for DiscreteChainBackend<F> {
    type Payload = usize;
    type Proxy = Vec<F>;

    fn steps(&self) -> usize {
        self.kernels.len()
    }

    fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> BackendState<usize> {
        BackendState {
            payload: categorical_index(&self.initial, F::unit(rng)),
            t: self.steps(),
        }
    }

    fn transition<R: Rng + ?Sized>(&self, payload: &usize, t: usize, rng: &mut R) -> usize {
        let s = self.states;
        let row = &self.kernel(t)[payload * s..(payload + 1) * s];
        categorical_index(row, F::unit(rng))
    }

    fn predict_x0(&self, state: &BackendState<usize>) -> Vec<F> {
        self.posterior(state.payload, state.t).to_vec()
    }

    fn render(&self, payload: &usize) -> String {
        payload.to_string()
    }
}
