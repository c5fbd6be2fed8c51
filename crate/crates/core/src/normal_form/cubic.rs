//! The fourth stage: the quadratic multipliers `A12`, `C12`, the correction
//! `M(w,z)` and its differential `K = M + E`.

use std::sync::Arc;

use crate::lattice::Lattice;
use crate::spectral::{Field, FieldPair};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    A12,
    C12,
}

/// Radius tables `A[μ][λ] = μ²/(8(μ−λ))` (zero on `μ = λ`) and
/// `C[μ][λ] = μ²/(8(μ+λ))`.
#[derive(Debug, Clone)]
pub struct CubicTables {
    lattice: Arc<Lattice>,
    a: Vec<f64>,
    c: Vec<f64>,
}

impl CubicTables {
    pub fn new(lattice: &Arc<Lattice>) -> CubicTables {
        let sh = lattice.shells();
        let ns = sh.len();
        let mut a = vec![0.0; ns * ns];
        let mut c = vec![0.0; ns * ns];
        for mu in 0..ns {
            for la in 0..ns {
                let (m, l) = (sh[mu].lambda, sh[la].lambda);
                if mu != la {
                    a[mu * ns + la] = m * m / (8.0 * (m - l));
                }
                c[mu * ns + la] = m * m / (8.0 * (m + l));
            }
        }
        CubicTables { lattice: lattice.clone(), a, c }
    }

    /// `out_k = (Σ_μ coef(μ,|k|) s_μ(u,v)) h_k`.
    pub fn apply(&self, which: Which, u: &Field, v: &Field, h: &Field) -> Field {
        let table = match which {
            Which::A12 => &self.a,
            Which::C12 => &self.c,
        };
        let s = u.shell_sums(v);
        let ns = s.len();
        let mut m = vec![C64::new(0.0, 0.0); ns];
        for (mu, smu) in s.iter().enumerate() {
            if *smu == C64::new(0.0, 0.0) {
                continue;
            }
            for (la, ml) in m.iter_mut().enumerate() {
                *ml += smu * table[mu * ns + la];
            }
        }
        h.shell_multiply(&m)
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    /// `M(w,z)(a,b) = (A12[w,w]b + C12[z,z]b, A12[z,z]a + C12[w,w]a)`.
    pub fn m_apply(&self, state: &FieldPair, dir: &FieldPair) -> FieldPair {
        let (w, z) = (&state.u, &state.v);
        FieldPair {
            u: &self.apply(Which::A12, w, w, &dir.v) + &self.apply(Which::C12, z, z, &dir.v),
            v: &self.apply(Which::A12, z, z, &dir.u) + &self.apply(Which::C12, w, w, &dir.u),
        }
    }

    /// `E(w,z)(α,β) = (2A12[w,α]z + 2C12[z,β]z, 2C12[w,α]w + 2A12[z,β]w)`.
    pub fn e_apply(&self, state: &FieldPair, dir: &FieldPair) -> FieldPair {
        let (w, z) = (&state.u, &state.v);
        let (al, be) = (&dir.u, &dir.v);
        FieldPair {
            u: (&self.apply(Which::A12, w, al, z) + &self.apply(Which::C12, z, be, z)).scale(2.0),
            v: (&self.apply(Which::C12, w, al, w) + &self.apply(Which::A12, z, be, w)).scale(2.0),
        }
    }

    /// `K(w,z) = M(w,z) + E(w,z)`, the differential of `(w,z) ↦ M(w,z)(w,z)`.
    pub fn k_apply(&self, state: &FieldPair, dir: &FieldPair) -> FieldPair {
        self.m_apply(state, dir).add(&self.e_apply(state, dir))
    }

    /// `M(w,z)(w,z)`.
    pub fn correction(&self, state: &FieldPair) -> FieldPair {
        self.m_apply(state, state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;

    #[test]
    fn worked_examples() {
        let lat = build_lattice(1, 4).unwrap();
        let t = CubicTables::new(&lat);
        let mut u = Field::zeros(&lat);
        u.set(&[1], C64::new(1.0, 0.0)).unwrap();
        u.set(&[-1], C64::new(1.0, 0.0)).unwrap();
        let mut h = Field::zeros(&lat);
        h.set(&[2], C64::new(0.3, -0.1)).unwrap();
        h.set(&[-2], C64::new(0.7, 0.2)).unwrap();
        let out = t.apply(Which::A12, &u, &u, &h);
        assert!((&out - &h.scale(-0.25)).max_abs() < 1e-16);
        let out = t.apply(Which::C12, &u, &u, &h);
        assert!((&out - &h.scale(1.0 / 12.0)).max_abs() < 1e-16);
        // diagonal excluded
        let out = t.apply(Which::A12, &u, &u, &u);
        assert_eq!(out.max_abs(), 0.0);
    }
}
