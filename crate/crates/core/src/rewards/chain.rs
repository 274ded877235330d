//! Rewards on refined chain pairs: net charge, secondary-structure
//! composition and a toy interface energy.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use super::refine::{refine, sequence_fractions, RefinedPair, Token};
use super::{EvalContext, RewardFunction, Scored};
use crate::error::{Error, Result};
use crate::geometry::{dist, turn_angles, Point};
use crate::scalar::Real;

/// Weight of the geometric class fractions in the blended composition.
pub const GEOMETRY_BLEND: f64 = 0.8;
/// Weight of the sequence-propensity class fractions.
pub const SEQUENCE_BLEND: f64 = 0.2;
/// Pair-potential truncation radius, reduced units.
pub const BIND_CUTOFF: f64 = 3.0;
/// Pair distances below this are evaluated at this distance, capping a
/// single clash at about 6.6 ε.
pub const BIND_SOFT_CORE: f64 = 0.9;

const HELIX_BAND_DEG: (f64, f64) = (40.0, 70.0);
const STRAND_MAX_DEG: f64 = 15.0;

/// `-|Q - Q*|` with K,R → +1 and D,E → -1.
pub fn reward_charge<F: Real>(pair: &RefinedPair<F>, q_star: i32) -> F {
    charge_reward_of(&pair.tokens, q_star)
}

pub(crate) fn charge_reward_of<F: Real>(tokens: &[Token], q_star: i32) -> F {
    let q: i32 = tokens.iter().map(|t| t.charge()).sum();
    -F::from_count((q - q_star).unsigned_abs() as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsClass {
    Helix,
    Strand,
    Loop,
}

impl SsClass {
    pub fn index(self) -> usize {
        match self {
            SsClass::Helix => 0,
            SsClass::Strand => 1,
            SsClass::Loop => 2,
        }
    }
}

impl fmt::Display for SsClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SsClass::Helix => "helix",
            SsClass::Strand => "strand",
            SsClass::Loop => "loop",
        })
    }
}

impl FromStr for SsClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "helix" | "alpha" => Ok(SsClass::Helix),
            "strand" | "beta" | "sheet" => Ok(SsClass::Strand),
            "loop" => Ok(SsClass::Loop),
            other => Err(Error::config(format!("unknown secondary structure class {other:?}"))),
        }
    }
}

/// Helix, strand and loop fractions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsFractions<F> {
    pub alpha: F,
    pub beta: F,
    pub ell: F,
}

impl<F: Real> SsFractions<F> {
    pub fn as_array(&self) -> [F; 3] {
        [self.alpha, self.beta, self.ell]
    }

    fn from_array(a: [F; 3]) -> Self {
        Self {
            alpha: a[0],
            beta: a[1],
            ell: a[2],
        }
    }
}

/// Geometric classification of interior residues by signed turn angle.
pub fn classify_ss<F: Real>(coords: &[Point<F>]) -> Result<SsFractions<F>> {
    if coords.len() < 3 {
        return Err(Error::input(format!(
            "secondary structure needs at least 3 residues, got {}",
            coords.len()
        )));
    }
    let mut counts = [0usize; 3];
    let turns = turn_angles(coords);
    for theta in &turns {
        let deg = theta.to_degrees().as_f64();
        let class = if (HELIX_BAND_DEG.0..=HELIX_BAND_DEG.1).contains(&deg) {
            SsClass::Helix
        } else if deg.abs() <= STRAND_MAX_DEG {
            SsClass::Strand
        } else {
            SsClass::Loop
        };
        counts[class.index()] += 1;
    }
    let n = F::from_count(turns.len());
    let alpha = F::from_count(counts[0]) / n;
    let beta = F::from_count(counts[1]) / n;
    // the remainder keeps the three fractions summing to exactly one
    Ok(SsFractions {
        alpha,
        beta,
        ell: F::one() - alpha - beta,
    })
}

/// Target class fractions and steering weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecondaryStructureTargets<F> {
    pub target: [F; 3],
    pub weights: [F; 3],
}

impl<F: Real> SecondaryStructureTargets<F> {
    /// Targets must sum to one; weights are rescaled to sum to one.
    pub fn new(target: [F; 3], weights: [F; 3]) -> Result<Self> {
        let tsum: F = target.iter().copied().sum();
        if target.iter().any(|x| *x < F::zero() || *x > F::one())
            || (tsum - F::one()).abs() > F::lit(1e-9)
        {
            return Err(Error::config("secondary-structure targets must lie in [0,1] and sum to 1"));
        }
        let wsum: F = weights.iter().copied().sum();
        if weights.iter().any(|w| *w < F::zero()) || !(wsum > F::zero()) {
            return Err(Error::config("secondary-structure weights must be non-negative, not all zero"));
        }
        Ok(Self {
            target,
            weights: weights.map(|w| w / wsum),
        })
    }

    /// Pure target on `class`, its term weighted fourfold over the others.
    pub fn steer_toward(class: SsClass) -> Self {
        let mut target = [F::zero(); 3];
        target[class.index()] = F::one();
        let mut weights = [F::one(); 3];
        weights[class.index()] = F::lit(4.0);
        Self::new(target, weights).expect("valid steering targets")
    }
}

/// Blend of geometric and sequence-propensity fractions.
pub fn blended_fractions<F: Real>(pair: &RefinedPair<F>) -> Result<SsFractions<F>> {
    let geo = classify_ss(&pair.coords)?.as_array();
    let seq = sequence_fractions::<F>(&pair.tokens);
    let (g, s) = (F::lit(GEOMETRY_BLEND), F::lit(SEQUENCE_BLEND));
    Ok(SsFractions::from_array([
        g * geo[0] + s * seq[0],
        g * geo[1] + s * seq[1],
        g * geo[2] + s * seq[2],
    ]))
}

/// `Σ_c w_c (1 - |f_c - f*_c|)` on blended fractions.
pub fn reward_ss<F: Real>(pair: &RefinedPair<F>, targets: &SecondaryStructureTargets<F>) -> Result<F> {
    Ok(score_fractions(&blended_fractions(pair)?, targets))
}

pub(crate) fn score_fractions<F: Real>(f: &SsFractions<F>, targets: &SecondaryStructureTargets<F>) -> F {
    f.as_array()
        .iter()
        .zip(targets.target.iter().zip(&targets.weights))
        .map(|(&fc, (&tc, &wc))| wc * (F::one() - (fc - tc).abs()))
        .sum()
}

fn pair_energy<F: Real>(r: F) -> F {
    if r >= F::lit(BIND_CUTOFF) {
        return F::zero();
    }
    let inv6 = r.max(F::lit(BIND_SOFT_CORE)).powi(-6);
    F::lit(4.0) * (inv6 * inv6 - inv6)
}

/// `-ΔG` with `ΔG` the truncated, soft-cored 12-6 sum over binder/target pairs (ε = σ = 1).
pub fn reward_binding<F: Real>(pair: &RefinedPair<F>, target: &[Point<F>]) -> F {
    let mut dg = F::zero();
    for &b in &pair.coords {
        for &p in target {
            dg = dg + pair_energy(dist(b, p));
        }
    }
    -dg
}

/// Flat target surface below the origin.
pub fn default_binding_target<F: Real>() -> Vec<Point<F>> {
    (-6..=6).map(|x| [F::lit(x as f64), F::lit(-2.5)]).collect()
}

/// Two-column `x,y` CSV, optional header.
pub fn load_target_csv<F: Real>(path: &Path) -> Result<Vec<Point<F>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::input(format!("target file row {i}: expected 2 columns")));
        }
        match (record[0].parse::<F>(), record[1].parse::<F>()) {
            (Ok(x), Ok(y)) => out.push([x, y]),
            _ if i == 0 => continue,
            _ => return Err(Error::input(format!("target file row {i}: bad number"))),
        }
    }
    if out.is_empty() {
        return Err(Error::input("target file has no points"));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub enum ChainRewardKind<F> {
    Charge { q_star: i32 },
    SecondaryStructure(SecondaryStructureTargets<F>),
    Binding { target: Vec<Point<F>> },
}

/// Refine, then score the refined pair.
#[derive(Clone, Debug)]
pub struct ChainReward<F> {
    pub kind: ChainRewardKind<F>,
    pub temperature: F,
}

impl<F: Real> ChainReward<F> {
    pub fn score_pair(&self, pair: &RefinedPair<F>) -> Result<F> {
        Ok(match &self.kind {
            ChainRewardKind::Charge { q_star } => reward_charge(pair, *q_star),
            ChainRewardKind::SecondaryStructure(targets) => reward_ss(pair, targets)?,
            ChainRewardKind::Binding { target } => reward_binding(pair, target),
        })
    }
}

impl<F: Real> RewardFunction<F, Vec<Point<F>>> for ChainReward<F> {
    fn score(&self, proxy: &Vec<Point<F>>, _ctx: &EvalContext, rng: &mut ChaCha8Rng) -> Result<Scored<F>> {
        let pair = refine(proxy, self.temperature, rng)?;
        Ok(Scored {
            value: self.score_pair(&pair)?,
            tokens: Some(pair.sequence()),
        })
    }

    fn is_stochastic(&self) -> bool {
        true
    }
}
