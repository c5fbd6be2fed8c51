//! Dense reference evaluation of quintic operators by explicit loops over
//! `(j, ℓ, k)`. Cost `O(#modes³)`; only for tiny lattices and for timing
//! comparisons.

use crate::spectral::{Field, FieldPair};
use crate::C64;

use super::coeffs::Rad;
use super::quintic::{pattern, Slot, TermSpec};

pub fn apply_dense(specs: &[TermSpec], pair: &FieldPair) -> FieldPair {
    let lat = pair.lattice();
    let rads: Vec<Rad> = lat.shells().iter().map(|s| Rad::new(s.n)).collect();
    let rad = |i: usize| rads[lat.shell_of(i)];
    let n = lat.len();
    let mut first = vec![C64::new(0.0, 0.0); n];
    let mut second = vec![C64::new(0.0, 0.0); n];
    let pick = |s: Slot, swap: bool| -> &Field {
        match (s, swap) {
            (Slot::U, false) | (Slot::V, true) => &pair.u,
            _ => &pair.v,
        }
    };
    for spec in specs {
        let p = pattern(spec.pattern);
        for k in 0..n {
            for j in 0..n {
                let mj = lat.neg(j);
                for l in 0..n {
                    let c = (spec.coef)(rad(j), rad(l), rad(k));
                    if c == 0.0 {
                        continue;
                    }
                    let ml = lat.neg(l);
                    let prod = |swap: bool| {
                        pick(p[0], swap).coeffs[j]
                            * pick(p[1], swap).coeffs[mj]
                            * pick(p[2], swap).coeffs[l]
                            * pick(p[3], swap).coeffs[ml]
                            * pick(p[4], swap).coeffs[k]
                    };
                    first[k] += spec.factor * c * prod(false);
                    second[k] += spec.factor.conj() * c * prod(true);
                }
            }
        }
    }
    FieldPair {
        u: Field { lattice: lat.clone(), coeffs: first },
        v: Field { lattice: lat.clone(), coeffs: second },
    }
}
