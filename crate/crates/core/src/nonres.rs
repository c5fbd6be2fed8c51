//! Nonresonance conditions on sum triples and constructors of profiles
//! that satisfy them.
//!
//! U-form: `|U_α + U_β − U_λ| ≥ c₀ (U_α + U_β + U_λ)` on triples with all
//! three shells populated. S-form applies the same test to `λ² S_λ`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::dynamics::m1;
use crate::lattice::{resonant_triples, Lattice, Triple, TripleSet};
use crate::spectral::{synth_physical, u_lambda_map, PhasePolicy, PhysicalState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Form {
    U,
    S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation<T> {
    pub triple: Triple,
    pub margin: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonresReport<T> {
    pub pass: bool,
    pub c0: T,
    /// Smallest margin over triples of populated shells; absent if none.
    pub worst_margin: Option<T>,
    pub worst_triple: Option<Triple>,
    pub checked: usize,
    /// Triples touching an unpopulated shell.
    pub skipped: usize,
    pub violations: Vec<Violation<T>>,
}

fn value_of<T: Clone + Zero>(values: &BTreeMap<u64, T>, n: u64) -> T {
    values.get(&n).cloned().unwrap_or_else(T::zero)
}

fn check_generic<T>(values: &BTreeMap<u64, T>, triples: &TripleSet, c0: &T, form: Form) -> Result<NonresReport<T>>
where
    T: Clone + PartialOrd + Signed + FromPrimitive,
{
    if !(*c0 > T::zero() && *c0 <= T::one()) {
        return Err(Error::InvalidArgument("c0 must lie in (0, 1]".into()));
    }
    let weight = |n: u64| -> T {
        let v = value_of(values, n);
        match form {
            Form::U => v,
            Form::S => v * T::from_u64(n).expect("shell key fits"),
        }
    };
    let mut rep =
        NonresReport { pass: true, c0: c0.clone(), worst_margin: None, worst_triple: None, checked: 0, skipped: 0, violations: vec![] };
    for t in triples.iter() {
        let (a, b, l) = (weight(t.a), weight(t.b), weight(t.l));
        if a.is_negative() || b.is_negative() || l.is_negative() {
            return Err(Error::InvalidArgument("values must be nonnegative".into()));
        }
        if a.is_zero() || b.is_zero() || l.is_zero() {
            rep.skipped += 1;
            continue;
        }
        rep.checked += 1;
        let sum = a.clone() + b.clone();
        let margin = (sum.clone() - l.clone()).abs() / (sum + l);
        if rep.worst_margin.as_ref().map_or(true, |w| margin < *w) {
            rep.worst_margin = Some(margin.clone());
            rep.worst_triple = Some(*t);
        }
        if margin < *c0 {
            rep.pass = false;
            rep.violations.push(Violation { triple: *t, margin });
        }
    }
    Ok(rep)
}

pub fn check_nonres(values: &BTreeMap<u64, f64>, triples: &TripleSet, c0: f64, form: Form) -> Result<NonresReport<f64>> {
    if values.values().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("values must be finite".into()));
    }
    check_generic(values, triples, &c0, form)
}

/// [`check_nonres`] in exact rational arithmetic.
pub fn check_nonres_exact(
    values: &BTreeMap<u64, BigRational>,
    triples: &TripleSet,
    c0: &BigRational,
    form: Form,
) -> Result<NonresReport<BigRational>> {
    check_generic(values, triples, c0, form)
}

/// `|U_α + U_β − U_λ| ≥ c₀ / (min radius)^τ`; the reported margin of a
/// triple is `|U_α + U_β − U_λ| · (min radius)^τ`.
pub fn check_melnikov(values: &BTreeMap<u64, f64>, triples: &TripleSet, c0: f64, tau: f64) -> Result<NonresReport<f64>> {
    if !(c0 > 0.0 && tau > 0.0) {
        return Err(Error::InvalidArgument("need c0 > 0 and tau > 0".into()));
    }
    let mut rep = NonresReport { pass: true, c0, worst_margin: None, worst_triple: None, checked: 0, skipped: 0, violations: vec![] };
    for t in triples.iter() {
        let (a, b, l) = (value_of(values, t.a), value_of(values, t.b), value_of(values, t.l));
        if a == 0.0 || b == 0.0 || l == 0.0 {
            rep.skipped += 1;
            continue;
        }
        rep.checked += 1;
        let rmin = (t.a.min(t.b).min(t.l) as f64).sqrt();
        let margin = (a + b - l).abs() * rmin.powf(tau);
        if rep.worst_margin.map_or(true, |w| margin < w) {
            rep.worst_margin = Some(margin);
            rep.worst_triple = Some(*t);
        }
        if margin < c0 {
            rep.pass = false;
            rep.violations.push(Violation { triple: *t, margin });
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub enum NonresKind {
    Decreasing,
    PowerDecay(f64),
    Sequential(BigRational),
    OddSupport,
    PrimesPattern,
}

impl fmt::Display for NonresKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NonresKind::Decreasing => write!(f, "decreasing"),
            NonresKind::PowerDecay(s) => write!(f, "power-decay:{s}"),
            NonresKind::Sequential(c) => write!(f, "sequential:{c}"),
            NonresKind::OddSupport => write!(f, "odd-support"),
            NonresKind::PrimesPattern => write!(f, "primes-pattern"),
        }
    }
}

/// Parse a rational such as `1/9`, `0.25` or `3`.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let bad = || Error::Parse(format!("not a rational number: {s}"));
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((i, frac)) = s.split_once('.') {
        let neg = i.starts_with('-');
        let ip: BigInt = if i.is_empty() || i == "-" { BigInt::zero() } else { i.parse().map_err(|_| bad())? };
        if frac.is_empty() || !frac.bytes().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let fp: BigInt = frac.parse().map_err(|_| bad())?;
        let den = num_traits::pow(BigInt::from(10), frac.len());
        let f = BigRational::new(fp, den);
        let ip = BigRational::from_integer(ip);
        return Ok(if neg { ip - f } else { ip + f });
    }
    Ok(BigRational::from_integer(s.parse().map_err(|_| bad())?))
}

impl std::str::FromStr for NonresKind {
    type Err = Error;
    /// `decreasing`, `power-decay:<σ>`, `sequential:<c0>`, `odd-support`,
    /// `primes-pattern`.
    fn from_str(s: &str) -> Result<NonresKind> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let need = || arg.ok_or_else(|| Error::Parse(format!("{name} needs a parameter")));
        match name {
            "decreasing" => Ok(NonresKind::Decreasing),
            "power-decay" => {
                let a = need()?;
                Ok(NonresKind::PowerDecay(a.parse().map_err(|_| Error::Parse(format!("bad sigma {a}")))?))
            }
            "sequential" => Ok(NonresKind::Sequential(parse_rational(need()?)?)),
            "odd-support" => Ok(NonresKind::OddSupport),
            "primes-pattern" => Ok(NonresKind::PrimesPattern),
            _ => Err(Error::Parse(format!("unknown nonresonant kind {s}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub kind: String,
    pub c0: f64,
    /// `c0` as an exact fraction when the profile is rational.
    pub c0_exact: Option<String>,
    /// Worst margin of the realized (floating point) data.
    pub worst_margin: Option<f64>,
    /// Worst margin of the exact unscaled profile.
    pub worst_margin_exact: Option<String>,
    pub epsilon: f64,
    pub populated: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Certified {
    pub state: PhysicalState,
    pub certificate: Certificate,
    /// Unscaled rational profile, when the kind has one.
    pub exact_profile: Option<BTreeMap<u64, BigRational>>,
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Rational profile and certified c0 for each kind.
fn profile(kind: &NonresKind, lattice: &Lattice) -> Result<(BTreeMap<u64, BigRational>, BigRational)> {
    let shells = lattice.shells();
    let inv_pow = |n: u64, k: u32| BigRational::new(BigInt::one(), num_traits::pow(BigInt::from(n), k as usize));
    match kind {
        NonresKind::Decreasing => {
            let p = shells.iter().enumerate().map(|(i, s)| (s.n, ratio(1, i as i64 + 1))).collect();
            Ok((p, ratio(1, 3)))
        }
        NonresKind::PowerDecay(sigma) => {
            let k = *sigma as u32;
            let p = shells.iter().map(|s| (s.n, inv_pow(s.n, k))).collect();
            Ok((p, ratio(1, 3)))
        }
        NonresKind::Sequential(c0) => {
            if !(c0.is_positive() && *c0 < BigRational::one()) {
                return Err(Error::InvalidArgument("sequential c0 must lie in (0, 1)".into()));
            }
            let one = BigRational::one();
            let theta1 = (one.clone() - c0) / (one.clone() + c0);
            let mut classes: BTreeMap<u64, BTreeMap<u64, u64>> = BTreeMap::new();
            for s in shells {
                classes.entry(s.p).or_default().insert(s.m, s.n);
            }
            let mut out = BTreeMap::new();
            for by_m in classes.values() {
                let mut sig: BTreeMap<u64, BigRational> = BTreeMap::new();
                for (&m, &n) in by_m {
                    let mut x1: Option<BigRational> = None;
                    for (&ma, sa) in sig.range(..m) {
                        let mb = m - ma;
                        if mb < ma {
                            break;
                        }
                        if let Some(sb) = sig.get(&mb) {
                            let lo = theta1.clone() * (sa.clone() + sb);
                            if x1.as_ref().map_or(true, |x| lo < *x) {
                                x1 = Some(lo);
                            }
                        }
                    }
                    let s = x1.map_or_else(BigRational::one, |x| x / BigInt::from(2));
                    sig.insert(m, s.clone());
                    out.insert(n, s);
                }
            }
            Ok((out, c0.clone()))
        }
        NonresKind::OddSupport => {
            let p: BTreeMap<_, _> =
                shells.iter().filter(|s| s.p == 1 && s.m % 2 == 1).map(|s| (s.n, inv_pow(s.n, 2))).collect();
            Ok((p, BigRational::one()))
        }
        NonresKind::PrimesPattern => {
            let p = shells.iter().filter(|s| s.m % 2 == 1).map(|s| (s.n, inv_pow(s.n, 2))).collect();
            Ok((p, BigRational::one()))
        }
    }
}

/// Real data `(a, 0)` with a nonresonant U-profile, scaled to
/// `‖a‖_{m₁+½} + ‖b‖_{m₁−½} = ε`, re-checked before return.
pub fn make_nonresonant(kind: &NonresKind, lattice: &Arc<Lattice>, eps: f64) -> Result<Certified> {
    make_nonresonant_with(kind, lattice, eps, PhasePolicy::Zero)
}

pub fn make_nonresonant_with(kind: &NonresKind, lattice: &Arc<Lattice>, eps: f64, phases: PhasePolicy) -> Result<Certified> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let mm1 = m1(lattice.dim());
    if let NonresKind::PowerDecay(sigma) = kind {
        if !(*sigma > mm1) {
            return Err(Error::InvalidArgument(format!("power-decay needs sigma > m1 = {mm1}")));
        }
    }
    let (exact, c0) = profile(kind, lattice)?;
    let exact_ok = !matches!(kind, NonresKind::PowerDecay(s) if s.fract() != 0.0);
    let targets: BTreeMap<u64, f64> = match kind {
        NonresKind::PowerDecay(sigma) if !exact_ok => lattice.shells().iter().map(|s| (s.n, (s.n as f64).powf(-sigma))).collect(),
        _ => exact.iter().map(|(&n, v)| (n, rational_to_f64(v))).collect(),
    };
    if targets.values().all(|v| *v == 0.0) {
        return Err(Error::InvalidArgument(format!("{kind} populates no shell of this lattice")));
    }
    let raw = synth_physical(lattice, &targets, phases)?;
    let state = raw.scale(eps / raw.energy_norm(mm1));

    let triples = resonant_triples(lattice);
    let c0f = rational_to_f64(&c0);
    let realized = check_nonres(&u_lambda_map(&state), &triples, c0f, Form::U)?;
    if !realized.pass {
        return Err(Error::Certification(format!(
            "{kind}: realized data misses c0 = {c0} (worst margin {:?})",
            realized.worst_margin
        )));
    }
    let mut worst_exact = None;
    if exact_ok {
        let rep = check_nonres_exact(&exact, &triples, &c0, Form::U)?;
        if !rep.pass {
            return Err(Error::Certification(format!("{kind}: exact profile misses c0 = {c0}")));
        }
        worst_exact = rep.worst_margin.map(|m| m.to_string());
    }
    let certificate = Certificate {
        kind: kind.to_string(),
        c0: c0f,
        c0_exact: exact_ok.then(|| c0.to_string()),
        worst_margin: realized.worst_margin,
        worst_margin_exact: worst_exact,
        epsilon: eps,
        populated: targets.iter().filter(|(_, v)| **v > 0.0).map(|(n, _)| *n).collect(),
    };
    Ok(Certified { state, certificate, exact_profile: exact_ok.then_some(exact) })
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationMargin {
    /// `+∞` when the perturbation lives on a shell the base leaves empty.
    pub mu: f64,
    pub c0_new: f64,
    pub offending_shell: Option<u64>,
}

/// Smallest `μ` with `U_λ(f,g) ≤ μ² U_λ(a,b)` and the surviving constant
/// `max(c₀ − 4μ, 0)`.
pub fn perturbation_margin(
    base: &PhysicalState,
    certificate: Option<&Certificate>,
    pert: &PhysicalState,
) -> Result<PerturbationMargin> {
    let cert = certificate.ok_or_else(|| Error::Certification("base state has no certificate".into()))?;
    if !base.lattice().same_lattice(pert.lattice()) {
        return Err(Error::LatticeMismatch);
    }
    let ub = u_lambda_map(base);
    let up = u_lambda_map(pert);
    let mut mu2: f64 = 0.0;
    for (n, &p) in &up {
        if p == 0.0 {
            continue;
        }
        let b = ub[n];
        if b == 0.0 {
            return Ok(PerturbationMargin { mu: f64::INFINITY, c0_new: 0.0, offending_shell: Some(*n) });
        }
        mu2 = mu2.max(p / b);
    }
    let mu = mu2.sqrt();
    Ok(PerturbationMargin { mu, c0_new: (cert.c0 - 4.0 * mu).max(0.0), offending_shell: None })
}

fn exact_sqrt(r: &BigRational) -> Option<BigRational> {
    let root = |x: &BigInt| {
        let s = x.sqrt();
        (&s * &s == *x).then_some(s)
    };
    if r.is_negative() {
        return None;
    }
    Some(BigRational::new(root(r.numer())?, root(r.denom())?))
}

/// Exact `μ` for rational profiles, when `μ²` is a rational square, and
/// `max(c₀ − 4μ, 0)`.
pub fn perturbation_margin_exact(
    base: &BTreeMap<u64, BigRational>,
    pert: &BTreeMap<u64, BigRational>,
    c0: &BigRational,
) -> Result<Option<(BigRational, BigRational)>> {
    let mut mu2 = BigRational::zero();
    for (n, p) in pert {
        if p.is_zero() {
            continue;
        }
        match base.get(n) {
            Some(b) if b.is_positive() => {
                let r = p / b;
                if r > mu2 {
                    mu2 = r;
                }
            }
            _ => return Err(Error::InvalidArgument(format!("perturbation populates empty shell {n}"))),
        }
    }
    Ok(exact_sqrt(&mu2).map(|mu| {
        let c = c0 - BigRational::from_integer(BigInt::from(4)) * &mu;
        let c = if c.is_negative() { BigRational::zero() } else { c };
        (mu, c)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, resonant_triples_for_keys, squarefree_decompose};

    fn q(n: i64, d: i64) -> BigRational {
        ratio(n, d)
    }

    #[test]
    fn equal_values_margin_one_third() {
        let v: BTreeMap<u64, f64> = [(1, 2.0), (4, 2.0), (9, 2.0)].into();
        let tr = resonant_triples_for_keys(&[1, 4, 9]);
        let r = check_nonres(&v, &tr, 1.0 / 3.0, Form::U).unwrap();
        assert!(r.pass);
        assert!((r.worst_margin.unwrap() - 1.0 / 3.0).abs() < 1e-16);
        assert!(!check_nonres(&v, &tr, 0.34, Form::U).unwrap().pass);
        let ve: BTreeMap<u64, BigRational> = v.keys().map(|&n| (n, q(2, 1))).collect();
        let r = check_nonres_exact(&ve, &tr, &q(1, 3), Form::U).unwrap();
        assert!(r.pass && r.worst_margin == Some(q(1, 3)));
        assert!(check_nonres(&v, &tr, 0.0, Form::U).is_err());
        assert!(check_nonres(&v, &tr, 1.5, Form::U).is_err());
    }

    #[test]
    fn odd_support_is_vacuous() {
        let lat = build_lattice(1, 100).unwrap();
        let c = make_nonresonant(&NonresKind::OddSupport, &lat, 0.1).unwrap();
        assert_eq!(c.certificate.c0, 1.0);
        assert!(c.certificate.worst_margin.is_none());
        assert!(c.certificate.populated.iter().all(|&n| squarefree_decompose(n).0 % 2 == 1));
        assert!((c.state.energy_norm(1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn constructors_certify() {
        for d in [1, 2] {
            let lat = build_lattice(d, 64).unwrap();
            for kind in ["decreasing", "power-decay:3", "power-decay:3.5", "sequential:1/9", "odd-support", "primes-pattern"] {
                let kind: NonresKind = kind.parse().unwrap();
                let c = make_nonresonant(&kind, &lat, 0.05).unwrap();
                assert!((c.state.energy_norm(m1(d)) - 0.05).abs() < 1e-14, "{kind}");
                assert_eq!(c.state.b.max_abs(), 0.0);
                if let Some(w) = c.certificate.worst_margin {
                    assert!(w >= c.certificate.c0, "{kind} {w}");
                }
            }
        }
        let lat = build_lattice(1, 64).unwrap();
        assert!(make_nonresonant(&NonresKind::PowerDecay(1.0), &lat, 0.05).is_err());
        assert!(make_nonresonant(&NonresKind::Sequential(q(3, 2)), &lat, 0.05).is_err());
    }

    #[test]
    fn power_decay_certificate() {
        let lat = build_lattice(1, 64).unwrap();
        let c = make_nonresonant(&NonresKind::PowerDecay(3.0), &lat, 0.05).unwrap();
        assert_eq!(c.certificate.c0_exact.as_deref(), Some("1/3"));
        assert_eq!(c.certificate.populated.len(), 8);
    }

    #[test]
    fn sequential_avoids_intervals() {
        let lat = build_lattice(2, 50).unwrap();
        let c = make_nonresonant(&NonresKind::Sequential(q(1, 9)), &lat, 0.05).unwrap();
        let prof = c.exact_profile.unwrap();
        for t in resonant_triples(&lat).iter() {
            let s = &prof[&t.a] + &prof[&t.b];
            let x = &prof[&t.l];
            assert!(*x < q(8, 10) * &s || *x > q(10, 8) * &s);
        }
    }

    #[test]
    fn perturbation_exact_constants() {
        let base: BTreeMap<u64, BigRational> = [(1, q(1, 1)), (4, q(1, 2)), (9, q(1, 3))].into();
        let pert: BTreeMap<u64, BigRational> = base.iter().map(|(&n, v)| (n, v * q(1, 576))).collect();
        let (mu, c) = perturbation_margin_exact(&base, &pert, &q(1, 3)).unwrap().unwrap();
        assert_eq!(mu, q(1, 24));
        assert_eq!(c, q(1, 6));
        let zero: BTreeMap<u64, BigRational> = BTreeMap::new();
        assert_eq!(perturbation_margin_exact(&base, &zero, &q(1, 3)).unwrap().unwrap(), (q(0, 1), q(1, 3)));
    }

    #[test]
    fn perturbation_float() {
        let lat = build_lattice(1, 16).unwrap();
        let base = make_nonresonant(&NonresKind::Decreasing, &lat, 0.05).unwrap();
        let zero = PhysicalState::zeros(&lat);
        let m = perturbation_margin(&base.state, Some(&base.certificate), &zero).unwrap();
        assert_eq!((m.mu, m.c0_new), (0.0, 1.0 / 3.0));
        assert!(perturbation_margin(&base.state, None, &zero).is_err());
        let odd = make_nonresonant(&NonresKind::OddSupport, &lat, 0.05).unwrap();
        let mut t = BTreeMap::new();
        t.insert(4u64, 1e-6);
        let pert = synth_physical(&lat, &t, PhasePolicy::Zero).unwrap();
        let m = perturbation_margin(&odd.state, Some(&odd.certificate), &pert).unwrap();
        assert_eq!(m.mu, f64::INFINITY);
        assert_eq!(m.offending_shell, Some(4));
    }

    #[test]
    fn melnikov_examples() {
        let tr = resonant_triples_for_keys(&(1..=8u64).map(|r| r * r).collect::<Vec<_>>());
        let empty = BTreeMap::new();
        assert!(check_melnikov(&empty, &tr, 0.1, 2.0).unwrap().pass);
        let v: BTreeMap<u64, f64> = (1..=8u64).map(|r| (r * r, (r as f64).powi(-6))).collect();
        let rep = check_melnikov(&v, &tr, 0.1, 2.0).unwrap();
        let mut pass = true;
        for a in 1..=8u64 {
            for b in a..=8 {
                if a + b <= 8 {
                    let d = ((a as f64).powi(-6) + (b as f64).powi(-6) - ((a + b) as f64).powi(-6)).abs();
                    pass &= d * (a as f64).powi(2) >= 0.1;
                }
            }
        }
        assert_eq!(rep.pass, pass);
        assert!(check_melnikov(&v, &tr, 0.0, 2.0).is_err());
    }

    #[test]
    fn parse_rationals() {
        assert_eq!(parse_rational("1/9").unwrap(), q(1, 9));
        assert_eq!(parse_rational("0.25").unwrap(), q(1, 4));
        assert_eq!(parse_rational("3").unwrap(), q(3, 1));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }
}
