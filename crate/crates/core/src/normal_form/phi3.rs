//! The third stage, which removes the Kirchhoff factor `1 + P` from the
//! linear frequencies by a state-dependent rotation of `(η, ψ)`.

use crate::spectral::{pairing, FieldPair};
use crate::{Error, Result};

use super::Direction;

/// Scalars of the third stage at a given pair.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Phi3Scalars {
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "P")]
    pub p: f64,
    pub rho: f64,
    #[serde(rename = "calP")]
    pub cal_p: f64,
}

/// `Q(η,ψ) = ¼⟨Λ(η+ψ), η+ψ⟩`.
pub fn q_value(pair: &FieldPair) -> f64 {
    let s = &pair.u + &pair.v;
    0.25 * pairing(&s.lambda_pow(1.0), &s).expect("same lattice").re
}

/// Inverse of `x ↦ x√(1+2x)` on `x ≥ 0`: Newton on `2x³ + x² − y² = 0`
/// from `x₀ = y`, falling back to bisection on `[0, max(1, y)]`.
pub fn phi(y: f64) -> Result<f64> {
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::RootFind { y });
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let f = |x: f64| 2.0 * x * x * x + x * x - y * y;
    let (mut lo, mut hi) = (0.0, y.max(1.0));
    let mut x = y;
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dfx = 6.0 * x * x + 2.0 * x;
        let mut next = x - fx / dfx;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x {
            return Ok(next);
        }
        x = next;
        if hi - lo <= 1e-16 * hi {
            return Ok(x);
        }
    }
    Err(Error::RootFind { y })
}

/// `ρ(x) = −x / (1 + x + √(1+2x))`.
pub fn rho(x: f64) -> f64 {
    -x / (1.0 + x + (1.0 + 2.0 * x).sqrt())
}

/// `√(1+2P) − 1` without cancellation.
pub fn cal_p_of(p: f64) -> f64 {
    2.0 * p / (1.0 + (1.0 + 2.0 * p).sqrt())
}

pub fn phi3_scalars(pair: &FieldPair) -> Result<Phi3Scalars> {
    let q = q_value(pair).max(0.0);
    let p = phi(q)?;
    Ok(Phi3Scalars { q, p, rho: rho(p), cal_p: cal_p_of(p) })
}

fn mix(pair: &FieldPair, r: f64) -> FieldPair {
    let c = 1.0 / (1.0 - r * r).sqrt();
    FieldPair {
        u: pair.u.axpy(r.into(), &pair.v).scale(c),
        v: pair.v.axpy(r.into(), &pair.u).scale(c),
    }
}

/// `Forward`: `(η,ψ) ↦ (f,g)` with `ρ = ρ(P(η,ψ))`.
/// `Inverse`: `(f,g) ↦ (η,ψ)` with the opposite mixing and `ρ = ρ(Q(f,g))`.
pub fn phi3(dir: Direction, pair: &FieldPair) -> Result<FieldPair> {
    match dir {
        Direction::Forward => {
            let sc = phi3_scalars(pair)?;
            Ok(mix(pair, sc.rho))
        }
        Direction::Inverse => {
            let r = rho(q_value(pair).max(0.0));
            Ok(mix(pair, -r))
        }
    }
}
