//! Radius-only coefficient functions of the quintic operators.
//!
//! Every Kronecker delta on radii (`|j| = |k|`, `|k| = |j| + |ℓ|`, ...) is
//! decided on integer shell keys; every `0/0` is taken as zero by an explicit
//! guard before dividing.

use crate::lattice::squarefree_decompose;

/// A shell radius `√n` with its squarefree class `n = m²p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rad {
    pub n: u64,
    pub m: u64,
    pub p: u64,
    pub r: f64,
}

impl Rad {
    pub fn new(n: u64) -> Rad {
        let (m, p) = squarefree_decompose(n);
        Rad { n, m, p, r: (n as f64).sqrt() }
    }
}

/// `δ_{a = b}` on radii.
#[inline]
fn eq(a: Rad, b: Rad) -> f64 {
    if a.n == b.n {
        1.0
    } else {
        0.0
    }
}

/// `a + b = c` exactly.
#[inline]
fn sum_is(a: Rad, b: Rad, c: Rad) -> bool {
    a.p == b.p && b.p == c.p && a.m + b.m == c.m
}

/// `num / den`, with `0/anything = 0`.
#[inline]
fn frac(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Families of the degree-5 correction `𝓜` of the fifth transformation.
/// `b11` and `d11` vanish identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    A11,
    B11,
    C11,
    D11,
    F11,
    A12,
    B12,
    C12,
    D12,
    F12,
}

impl Family {
    pub const ALL: [Family; 10] = [
        Family::A11,
        Family::B11,
        Family::C11,
        Family::D11,
        Family::F11,
        Family::A12,
        Family::B12,
        Family::C12,
        Family::D12,
        Family::F12,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::A11 => "a11",
            Family::B11 => "b11",
            Family::C11 => "c11",
            Family::D11 => "d11",
            Family::F11 => "f11",
            Family::A12 => "a12",
            Family::B12 => "b12",
            Family::C12 => "c12",
            Family::D12 => "d12",
            Family::F12 => "f12",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Family> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| crate::Error::InvalidArgument(format!("unknown family {s}")))
    }
}

/// Value of a coefficient family at shell keys `(|j|², |ℓ|², |k|²)`.
pub fn phi5_coefficient(family: Family, nj: u64, nl: u64, nk: u64) -> f64 {
    phi5_coefficient_rad(family, Rad::new(nj), Rad::new(nl), Rad::new(nk))
}

pub fn phi5_coefficient_rad(family: Family, jr: Rad, lr: Rad, kr: Rad) -> f64 {
    let (j, l, k) = (jr.r, lr.r, kr.r);
    let (j2, l2) = (j * j, l * l);
    match family {
        Family::B11 | Family::D11 => 0.0,
        Family::A11 => j2 * l2 / (128.0 * (j + l)) * (1.0 / (j + k) + 1.0 / (l + k)),
        Family::C11 => {
            if jr.n == lr.n {
                return 0.0;
            }
            let bracket = frac(-eq(lr, kr) * (1.0 - eq(jr, kr)), j - k) + 1.0 / (j + k)
                - frac(1.0 - eq(lr, kr), l - k);
            j2 * l2 / 64.0 * bracket / (l - j)
        }
        Family::F11 => {
            let bracket = -(eq(lr, kr) + eq(jr, kr)) / (j + l)
                + frac(1.0 - eq(jr, kr), j - k)
                + frac(1.0 - eq(lr, kr), l - k);
            bracket * j2 * l2 / (128.0 * (j + l))
        }
        Family::A12 => {
            if sum_is(jr, lr, kr) {
                return 0.0;
            }
            3.0 / 64.0 * j * l * (j + l) / (k - j - l)
        }
        Family::B12 => {
            if jr.n == kr.n {
                return 0.0;
            }
            let bracket = frac(l * eq(lr, jr) * (1.0 - eq(lr, kr)), l - k)
                + 6.0
                + l / (l + j)
                + frac(l * (1.0 - eq(lr, jr)), l - j);
            j2 * l / 32.0 * bracket / (k - j)
        }
        Family::C12 => {
            // |k| = |j| - |ℓ|  ⇔  |k| + |ℓ| = |j|
            if sum_is(kr, lr, jr) {
                return 0.0;
            }
            3.0 / 32.0 * j * l * (j - l) / (k - j + l)
        }
        Family::D12 => {
            let bracket = frac(-j * eq(jr, lr), j + k) - 6.0 + frac(j * (1.0 - eq(jr, lr)), l - j) - j / (l + j);
            j * l2 / (32.0 * (k + l)) * bracket
        }
        Family::F12 => -3.0 * j * l * (j + l) / (64.0 * (k + j + l)),
    }
}

/// The eight `Y` operators of the degree-5 part of the transformed field,
/// as real parts of purely imaginary coefficients (the factor `i` is implicit).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YTerm {
    Y11_4,
    Y11_2,
    Y11_0,
    Y12_4,
    Y12_3,
    Y12_2,
    Y12_1,
    Y12_0,
}

pub fn y_coefficient(term: YTerm, jr: Rad, lr: Rad, kr: Rad) -> f64 {
    let (j, l, k) = (jr.r, lr.r, kr.r);
    let (j2, l2) = (j * j, l * l);
    match term {
        YTerm::Y11_4 => -1.0 / 64.0 * (j2 * l2 / (j + k) + j2 * l2 / (l + k)),
        YTerm::Y11_2 => {
            1.0 / 32.0
                * j2
                * l2
                * (frac(-eq(lr, kr) * (1.0 - eq(jr, kr)), j - k) + 1.0 / (j + k) - frac(1.0 - eq(lr, kr), l - k))
        }
        YTerm::Y11_0 => {
            1.0 / 64.0
                * j2
                * l2
                * (-(eq(lr, kr) + eq(jr, kr)) / (j + l) + frac(1.0 - eq(jr, kr), j - k) + frac(1.0 - eq(lr, kr), l - k))
        }
        YTerm::Y12_4 => 3.0 / 32.0 * j * l * (j + l),
        YTerm::Y12_3 => {
            1.0 / 16.0
                * j2
                * l
                * (frac(l * eq(lr, jr) * (1.0 - eq(lr, kr)), l - k) + 6.0 + l / (l + j) + frac(l * (1.0 - eq(lr, jr)), l - j))
        }
        YTerm::Y12_2 => 3.0 / 16.0 * j * l * (j - l),
        YTerm::Y12_1 => {
            1.0 / 16.0 * j * l2 * (frac(-j * eq(jr, lr), j + k) - 6.0 + frac(j * (1.0 - eq(jr, lr)), l - j) - j / (l + j))
        }
        YTerm::Y12_0 => -3.0 / 32.0 * j * l * (j + l),
    }
}

/// The four resonant sums of the degree-5 normal form (factor `i` implicit).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum W5Term {
    /// `|j| = |ℓ|`
    EqualPair,
    /// `|k| = |j| + |ℓ|`
    Sum,
    /// `|j| = |k|`
    Diagonal,
    /// `|k| = |j| - |ℓ|`
    Difference,
}

pub fn w5_coefficient(term: W5Term, jr: Rad, lr: Rad, kr: Rad) -> f64 {
    let (j, l, k) = (jr.r, lr.r, kr.r);
    match term {
        W5Term::EqualPair => {
            if jr.n != lr.n {
                return 0.0;
            }
            1.0 / 32.0 * j * j * l * l * (1.0 / (j + k) - frac(1.0 - eq(lr, kr), l - k))
        }
        W5Term::Sum => {
            if !sum_is(jr, lr, kr) {
                return 0.0;
            }
            3.0 / 32.0 * j * l * k
        }
        W5Term::Diagonal => {
            if jr.n != kr.n {
                return 0.0;
            }
            1.0 / 16.0 * j * j * l * (6.0 + l / (l + j) + frac(l * (1.0 - eq(lr, jr)), l - j))
        }
        W5Term::Difference => {
            if !sum_is(kr, lr, jr) {
                return 0.0;
            }
            3.0 / 16.0 * j * l * k
        }
    }
}
