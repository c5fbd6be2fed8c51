//! The two linear stages: `Φ⁽¹⁾(q,p) = (Λ^{-½}q, Λ^{½}p)` and
//! `Φ⁽²⁾(f,g) = ((f+g)/√2, (f-g)/(i√2))`.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::spectral::{FieldPair, PhysicalState};
use crate::C64;

use super::Direction;

/// Stage 1 on real pairs. `Forward` maps `(q, p)` to `(a, b)`.
pub fn phi1(dir: Direction, state: &PhysicalState) -> PhysicalState {
    let s = match dir {
        Direction::Forward => -0.5,
        Direction::Inverse => 0.5,
    };
    PhysicalState { a: state.a.lambda_pow(s), b: state.b.lambda_pow(-s) }
}

/// Stage 2 forward: `(f, g) ↦ (q, p)`.
pub fn phi2_forward(pair: &FieldPair) -> PhysicalState {
    let q = (&pair.u + &pair.v).scale(FRAC_1_SQRT_2);
    let p = (&pair.u - &pair.v).scale_c(C64::new(0.0, -FRAC_1_SQRT_2));
    PhysicalState { a: q, b: p }
}

/// Stage 2 inverse: `f = (q + ip)/√2`, `g = (q - ip)/√2`.
pub fn phi2_inverse(state: &PhysicalState) -> FieldPair {
    let f = state.a.axpy(C64::new(0.0, 1.0), &state.b).scale(FRAC_1_SQRT_2);
    let g = state.a.axpy(C64::new(0.0, -1.0), &state.b).scale(FRAC_1_SQRT_2);
    FieldPair { u: f, v: g }
}
