//! Planar chain geometry shared by the chain backend and the rewards.

use crate::scalar::Real;

pub type Point<F> = [F; 2];

#[inline]
pub fn sub<F: Real>(a: Point<F>, b: Point<F>) -> Point<F> {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn norm<F: Real>(v: Point<F>) -> F {
    v[0].hypot(v[1])
}

#[inline]
pub fn dist<F: Real>(a: Point<F>, b: Point<F>) -> F {
    norm(sub(a, b))
}

/// Signed angle (radians, in (-π, π]) from bond `a` to bond `b`.
#[inline]
pub fn signed_angle<F: Real>(a: Point<F>, b: Point<F>) -> F {
    let cross = a[0] * b[1] - a[1] * b[0];
    let dot = a[0] * b[0] + a[1] * b[1];
    cross.atan2(dot)
}

/// Signed turn angle at each interior residue `1..L-1`.
pub fn turn_angles<F: Real>(coords: &[Point<F>]) -> Vec<F> {
    coords
        .windows(3)
        .map(|w| signed_angle(sub(w[1], w[0]), sub(w[2], w[1])))
        .collect()
}

pub fn bond_lengths<F: Real>(coords: &[Point<F>]) -> Vec<F> {
    coords.windows(2).map(|w| dist(w[0], w[1])).collect()
}

/// Chain whose consecutive bonds all have unit length and turn by `turns[i]`.
pub fn chain_from_turns<F: Real>(turns: &[F]) -> Vec<Point<F>> {
    let mut coords = vec![[F::zero(), F::zero()], [F::one(), F::zero()]];
    let mut heading = F::zero();
    for &turn in turns {
        heading = heading + turn;
        let last = coords[coords.len() - 1];
        coords.push([last[0] + heading.cos(), last[1] + heading.sin()]);
    }
    coords
}
