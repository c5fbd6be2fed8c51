//! Shell-factorized quintic operators.
//!
//! An operator is a sum of terms
//! `out_k = c · Σ_{j,ℓ} coef(|j|,|ℓ|,|k|) x1_j x2_{-j} x3_ℓ x4_{-ℓ} x5_k`
//! whose slots read the first or second component of a pair. Since `coef`
//! depends only on radii, the sum collapses to
//! `m(|k|) x5_k` with `m(λ) = Σ_{μ,ν} coef(μ,ν,λ) s_μ(x1,x2) s_ν(x3,x4)`,
//! costing `O(#shells³ + #modes)` instead of `O(#modes³)`.
//!
//! The second component is the first with the two components exchanged and
//! `c` conjugated (real vector field structure).

use std::sync::Arc;

use crate::lattice::Lattice;
use crate::spectral::{Field, FieldPair};
use crate::C64;

use super::coeffs::Rad;

/// Declarative description of one term: name, prefactor, slot pattern such
/// as `"uuvvu"`, and the radius coefficient.
pub struct TermSpec {
    pub name: &'static str,
    pub factor: C64,
    pub pattern: &'static str,
    pub coef: Box<dyn Fn(Rad, Rad, Rad) -> f64 + Send + Sync>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    U,
    V,
}

impl Slot {
    fn pick<'a>(self, u: &'a Field, v: &'a Field) -> &'a Field {
        match self {
            Slot::U => u,
            Slot::V => v,
        }
    }
}

/// Parse a pattern such as `"uuvvu"`.
pub fn pattern(p: &str) -> [Slot; 5] {
    let mut out = [Slot::U; 5];
    for (o, ch) in out.iter_mut().zip(p.chars()) {
        *o = match ch {
            'u' => Slot::U,
            'v' => Slot::V,
            _ => panic!("bad pattern {p}"),
        };
    }
    out
}

/// A radius table `t[(μ·S + ν)·S + λ]` with its prefactor and slot pattern.
#[derive(Debug, Clone)]
pub struct QuinticTerm {
    pub name: &'static str,
    pub factor: C64,
    pub pattern: [Slot; 5],
    table: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QuinticOperator {
    lattice: Arc<Lattice>,
    pub terms: Vec<QuinticTerm>,
}

/// The shell sums `s(u,u)`, `s(u,v)`, `s(v,v)` of one state.
struct Sums {
    uu: Vec<C64>,
    uv: Vec<C64>,
    vv: Vec<C64>,
}

impl Sums {
    fn of(u: &Field, v: &Field) -> Sums {
        Sums { uu: u.shell_sums(u), uv: u.shell_sums(v), vv: v.shell_sums(v) }
    }

    fn get(&self, a: Slot, b: Slot) -> &[C64] {
        match (a, b) {
            (Slot::U, Slot::U) => &self.uu,
            (Slot::V, Slot::V) => &self.vv,
            _ => &self.uv,
        }
    }
}

/// Sums of a direction `(α, β)` against a state `(u, v)`:
/// `s(α,u)`, `s(α,v)`, `s(β,u)`, `s(β,v)`.
struct MixedSums {
    au: Vec<C64>,
    av: Vec<C64>,
    bu: Vec<C64>,
    bv: Vec<C64>,
}

impl MixedSums {
    fn of(u: &Field, v: &Field, a: &Field, b: &Field) -> MixedSums {
        MixedSums { au: a.shell_sums(u), av: a.shell_sums(v), bu: b.shell_sums(u), bv: b.shell_sums(v) }
    }

    /// `s(dir[x], state[y])`.
    fn get(&self, x: Slot, y: Slot) -> &[C64] {
        match (x, y) {
            (Slot::U, Slot::U) => &self.au,
            (Slot::U, Slot::V) => &self.av,
            (Slot::V, Slot::U) => &self.bu,
            (Slot::V, Slot::V) => &self.bv,
        }
    }
}

impl QuinticOperator {
    /// Tabulate `coef` over all shell triples of the lattice.
    pub fn new(lattice: &Arc<Lattice>, specs: &[TermSpec]) -> QuinticOperator {
        let rads: Vec<Rad> = lattice.shells().iter().map(|s| Rad::new(s.n)).collect();
        let ns = rads.len();
        let terms = specs
            .iter()
            .map(|spec| {
                let coef = &spec.coef;
                let mut table = vec![0.0; ns * ns * ns];
                for (mu, &rm) in rads.iter().enumerate() {
                    for (nu, &rn) in rads.iter().enumerate() {
                        for (la, &rl) in rads.iter().enumerate() {
                            table[(mu * ns + nu) * ns + la] = coef(rm, rn, rl);
                        }
                    }
                }
                QuinticTerm { name: spec.name, factor: spec.factor, pattern: pattern(spec.pattern), table }
            })
            .collect();
        QuinticOperator { lattice: lattice.clone(), terms }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    /// `m(λ) += Σ_{μ,ν} t(μ,ν,λ) s1[μ] s2[ν]` (adds `s1'·s2 + s1·s2'` form
    /// when called twice).
    fn contract(table: &[f64], s1: &[C64], s2: &[C64], m: &mut [C64]) {
        let ns = s1.len();
        for mu in 0..ns {
            if s1[mu] == C64::new(0.0, 0.0) {
                continue;
            }
            for nu in 0..ns {
                let w = s1[mu] * s2[nu];
                if w == C64::new(0.0, 0.0) {
                    continue;
                }
                let row = &table[(mu * ns + nu) * ns..(mu * ns + nu + 1) * ns];
                for (ml, t) in m.iter_mut().zip(row) {
                    *ml += w * t;
                }
            }
        }
    }

    /// First component of the operator applied to the state `(u, v)`.
    fn first(&self, u: &Field, v: &Field, conj: bool) -> Field {
        let sums = Sums::of(u, v);
        let ns = self.lattice.num_shells();
        let mut out = Field::zeros(&self.lattice);
        for t in &self.terms {
            let p = t.pattern;
            let mut m = vec![C64::new(0.0, 0.0); ns];
            Self::contract(&t.table, sums.get(p[0], p[1]), sums.get(p[2], p[3]), &mut m);
            let c = if conj { t.factor.conj() } else { t.factor };
            let h = p[4].pick(u, v);
            for mi in m.iter_mut() {
                *mi *= c;
            }
            out = out.axpy(C64::new(1.0, 0.0), &h.shell_multiply(&m));
        }
        out
    }

    /// `𝓜(u,v)(u,v)`.
    pub fn apply(&self, pair: &FieldPair) -> FieldPair {
        FieldPair { u: self.first(&pair.u, &pair.v, false), v: self.first(&pair.v, &pair.u, true) }
    }

    fn first_derivative(&self, u: &Field, v: &Field, a: &Field, b: &Field, conj: bool) -> Field {
        let sums = Sums::of(u, v);
        let mixed = MixedSums::of(u, v, a, b);
        let ns = self.lattice.num_shells();
        let mut out = Field::zeros(&self.lattice);
        let add = |x: &[C64], y: &[C64]| -> Vec<C64> { x.iter().zip(y).map(|(p, q)| p + q).collect() };
        for t in &self.terms {
            let p = t.pattern;
            let s1 = sums.get(p[0], p[1]);
            let s2 = sums.get(p[2], p[3]);
            let d1 = add(mixed.get(p[0], p[1]), mixed.get(p[1], p[0]));
            let d2 = add(mixed.get(p[2], p[3]), mixed.get(p[3], p[2]));
            let mut m_dir = vec![C64::new(0.0, 0.0); ns];
            Self::contract(&t.table, &d1, s2, &mut m_dir);
            Self::contract(&t.table, s1, &d2, &mut m_dir);
            let mut m0 = vec![C64::new(0.0, 0.0); ns];
            Self::contract(&t.table, s1, s2, &mut m0);
            let c = if conj { t.factor.conj() } else { t.factor };
            for x in m_dir.iter_mut().chain(m0.iter_mut()) {
                *x *= c;
            }
            let h = p[4].pick(u, v);
            let dh = p[4].pick(a, b);
            out = out.axpy(C64::new(1.0, 0.0), &h.shell_multiply(&m_dir));
            out = out.axpy(C64::new(1.0, 0.0), &dh.shell_multiply(&m0));
        }
        out
    }

    /// Directional derivative of `(u,v) ↦ 𝓜(u,v)(u,v)` along `dir`.
    pub fn derivative(&self, pair: &FieldPair, dir: &FieldPair) -> FieldPair {
        FieldPair {
            u: self.first_derivative(&pair.u, &pair.v, &dir.u, &dir.v, false),
            v: self.first_derivative(&pair.v, &pair.u, &dir.v, &dir.u, true),
        }
    }

    /// Entry of a term's table, for inspection and tests.
    pub fn table_entry(&self, term: usize, mu: usize, nu: usize, la: usize) -> f64 {
        let ns = self.lattice.num_shells();
        self.terms[term].table[(mu * ns + nu) * ns + la]
    }
}
