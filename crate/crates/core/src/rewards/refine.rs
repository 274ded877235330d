//! Stochastic refinement of a chain proxy into a sequence/structure pair.
//!
//! Stand-in for sequence design followed by relaxation: bonds are projected
//! to unit length, then one token per residue is drawn from a categorical
//! conditioned on the local signed turn angle.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{norm, sub, turn_angles, Point};
use crate::scalar::Real;

pub const DEFAULT_REFINER_TEMPERATURE: f64 = 0.2;
pub const PROJECTION_ITERATIONS: usize = 20;

// von Mises concentration of the token-given-angle model
const TOKEN_KAPPA: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Token {
    K,
    R,
    D,
    E,
    G,
    A,
    V,
    S,
}

impl Token {
    pub const ALL: [Token; 8] = [
        Token::K,
        Token::R,
        Token::D,
        Token::E,
        Token::G,
        Token::A,
        Token::V,
        Token::S,
    ];

    pub fn charge(self) -> i32 {
        match self {
            Token::K | Token::R => 1,
            Token::D | Token::E => -1,
            _ => 0,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Token::K => 'K',
            Token::R => 'R',
            Token::D => 'D',
            Token::E => 'E',
            Token::G => 'G',
            Token::A => 'A',
            Token::V => 'V',
            Token::S => 'S',
        }
    }

    pub fn from_char(c: char) -> Option<Token> {
        Token::ALL.into_iter().find(|t| t.as_char() == c)
    }

    /// Preferred signed turn angle, degrees.
    fn preferred_turn(self) -> f64 {
        match self {
            Token::K => 45.0,
            Token::A => 60.0,
            Token::R => 75.0,
            Token::V => 0.0,
            Token::D => -45.0,
            Token::E => -75.0,
            Token::S => 120.0,
            Token::G => 180.0,
        }
    }

    /// Helix / strand / loop propensity; each row sums to 1.
    pub fn propensity(self) -> [f64; 3] {
        match self {
            Token::A => [0.8, 0.1, 0.1],
            Token::K => [0.6, 0.1, 0.3],
            Token::R => [0.6, 0.1, 0.3],
            Token::E => [0.5, 0.1, 0.4],
            Token::V => [0.1, 0.8, 0.1],
            Token::D => [0.2, 0.1, 0.7],
            Token::S => [0.2, 0.2, 0.6],
            Token::G => [0.05, 0.1, 0.85],
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Refined sequence/structure pair.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinedPair<F> {
    pub tokens: Vec<Token>,
    pub coords: Vec<Point<F>>,
}

impl<F: Real> RefinedPair<F> {
    pub fn sequence(&self) -> String {
        self.tokens.iter().map(|t| t.as_char()).collect()
    }
}

/// Bring every bond to unit length while keeping the centroid fixed:
/// symmetric pairwise scaling sweeps, then an exact closing pass that
/// rebuilds the chain from unit bond directions.
pub fn project_bonds<F: Real>(coords: &[Point<F>], iterations: usize) -> Vec<Point<F>> {
    let n = coords.len();
    let mut x = coords.to_vec();
    if n < 2 {
        return x;
    }
    let half = F::lit(0.5);
    for _ in 0..iterations {
        for i in 0..n - 1 {
            let b = sub(x[i + 1], x[i]);
            let len = norm(b);
            if len <= F::epsilon() {
                continue;
            }
            let corr = half * (len - F::one()) / len;
            for c in 0..2 {
                x[i][c] = x[i][c] + corr * b[c];
                x[i + 1][c] = x[i + 1][c] - corr * b[c];
            }
        }
    }

    let centroid = |pts: &[Point<F>]| -> Point<F> {
        let nf = F::from_count(pts.len());
        let s = pts.iter().fold([F::zero(); 2], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / nf, s[1] / nf]
    };
    let target = centroid(&x);
    let mut rebuilt = Vec::with_capacity(n);
    rebuilt.push([F::zero(); 2]);
    let mut heading = [F::one(), F::zero()];
    for i in 0..n - 1 {
        let b = sub(x[i + 1], x[i]);
        let len = norm(b);
        if len > F::epsilon() {
            heading = [b[0] / len, b[1] / len];
        }
        let last = rebuilt[i];
        rebuilt.push([last[0] + heading[0], last[1] + heading[1]]);
    }
    let c = centroid(&rebuilt);
    for p in &mut rebuilt {
        p[0] = p[0] - c[0] + target[0];
        p[1] = p[1] - c[1] + target[1];
    }
    rebuilt
}

/// Per-residue turn angle; end residues take their neighbour's value.
fn residue_turns<F: Real>(coords: &[Point<F>]) -> Vec<F> {
    let interior = turn_angles(coords);
    let mut out = Vec::with_capacity(coords.len());
    out.push(interior[0]);
    out.extend_from_slice(&interior);
    out.push(interior[interior.len() - 1]);
    out
}

fn sample_token<F: Real, R: Rng + ?Sized>(turn: F, temperature: F, rng: &mut R) -> Token {
    let kappa = F::lit(TOKEN_KAPPA);
    let scores: Vec<F> = Token::ALL
        .iter()
        .map(|tok| kappa * (turn - F::lit(tok.preferred_turn()).to_radians()).cos() / temperature)
        .collect();
    let max = scores.iter().copied().fold(F::neg_infinity(), F::max);
    let probs: Vec<F> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: F = probs.iter().copied().sum();
    let u = F::unit(rng) * total;
    let mut acc = F::zero();
    for (tok, p) in Token::ALL.iter().zip(&probs) {
        acc = acc + *p;
        if u < acc {
            return *tok;
        }
    }
    Token::ALL[scores.iter().position(|&s| s == max).unwrap_or(0)]
}

/// Draw one refined pair from a chain proxy.
pub fn refine<F: Real, R: Rng + ?Sized>(
    proxy: &[Point<F>],
    temperature: F,
    rng: &mut R,
) -> Result<RefinedPair<F>> {
    if proxy.len() < 3 {
        return Err(Error::input(format!(
            "refinement needs at least 3 residues, got {}",
            proxy.len()
        )));
    }
    if !(temperature > F::zero()) {
        return Err(Error::input("refiner temperature must be positive"));
    }
    let coords = project_bonds(proxy, PROJECTION_ITERATIONS);
    let tokens = residue_turns(&coords)
        .into_iter()
        .map(|turn| sample_token(turn, temperature, rng))
        .collect();
    Ok(RefinedPair { tokens, coords })
}

/// Mean helix / strand / loop propensity over a sequence.
pub fn sequence_fractions<F: Real>(tokens: &[Token]) -> [F; 3] {
    let mut acc = [0.0f64; 3];
    for t in tokens {
        for (a, p) in acc.iter_mut().zip(t.propensity()) {
            *a += p;
        }
    }
    let n = tokens.len().max(1) as f64;
    acc.map(|a| F::lit(a / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{bond_lengths, chain_from_turns};
    use crate::rng::{stream, Purpose};

    #[test]
    fn propensity_rows_sum_to_one() {
        for t in Token::ALL {
            assert!((t.propensity().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(Token::from_char(t.as_char()), Some(t));
        }
    }

    #[test]
    fn straight_unit_chain_is_unchanged() {
        let chain: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 0.0]).collect();
        let projected = project_bonds(&chain, PROJECTION_ITERATIONS);
        for (a, b) in chain.iter().zip(&projected) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn doubled_bonds_project_to_unit() {
        let chain: Vec<[f64; 2]> = chain_from_turns(&[0.4; 13])
            .into_iter()
            .map(|p| [2.0 * p[0], 2.0 * p[1]])
            .collect();
        let pair = refine(&chain, 0.2, &mut stream(0, Purpose::Reward, 0, 0, 0)).unwrap();
        for l in bond_lengths(&pair.coords) {
            assert!((l - 1.0).abs() < 1e-3);
        }
        assert_eq!(pair.tokens.len(), chain.len());
    }

    #[test]
    fn cold_limit_is_argmax() {
        let chain = chain_from_turns(&[60f64.to_radians(); 8]);
        let seqs: Vec<String> = (0..20)
            .map(|s| refine(&chain, 1e-9, &mut stream(s, Purpose::Reward, 0, 0, 0)).unwrap().sequence())
            .collect();
        assert!(seqs.iter().all(|s| s == &"A".repeat(10)));
    }

    #[test]
    fn refinement_is_stochastic_at_default_temperature() {
        let chain = chain_from_turns(&[55f64.to_radians(); 13]);
        let a = refine(&chain, 0.2, &mut stream(1, Purpose::Reward, 0, 0, 0)).unwrap();
        let b = refine(&chain, 0.2, &mut stream(2, Purpose::Reward, 0, 0, 0)).unwrap();
        assert_ne!(a.tokens, b.tokens);
    }

    #[test]
    fn short_chains_are_rejected() {
        let chain = vec![[0.0f64, 0.0], [1.0, 0.0]];
        assert!(refine(&chain, 0.2, &mut stream(0, Purpose::Reward, 0, 0, 0)).is_err());
    }
}
