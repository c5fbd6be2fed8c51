//! Zero-mean fields in Fourier coefficients, Sobolev norms, the pairing
//! `⟨w,h⟩ = Σ_j w_j h_{-j}`, shell observables and data synthesis.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::lattice::{build_lattice, Lattice};
use crate::{Error, Result, C64};

/// Coefficients `u_k` for every lattice point, in lattice order.
#[derive(Debug, Clone)]
pub struct Field {
    pub lattice: Arc<Lattice>,
    pub coeffs: Vec<C64>,
}

impl Field {
    pub fn zeros(lattice: &Arc<Lattice>) -> Field {
        Field { lattice: lattice.clone(), coeffs: vec![C64::new(0.0, 0.0); lattice.len()] }
    }

    pub fn from_fn(lattice: &Arc<Lattice>, mut f: impl FnMut(usize) -> C64) -> Field {
        Field { lattice: lattice.clone(), coeffs: (0..lattice.len()).map(&mut f).collect() }
    }

    /// Set the coefficient at lattice point `k`.
    pub fn set(&mut self, k: &[i64], value: C64) -> Result<()> {
        let i = self
            .lattice
            .index_of(k)
            .ok_or_else(|| Error::InvalidArgument(format!("point {k:?} not in lattice")))?;
        self.coeffs[i] = value;
        Ok(())
    }

    pub fn get(&self, k: &[i64]) -> Option<C64> {
        self.lattice.index_of(k).map(|i| self.coeffs[i])
    }

    pub fn check_same(&self, other: &Field) -> Result<()> {
        if self.lattice.same_lattice(&other.lattice) {
            Ok(())
        } else {
            Err(Error::LatticeMismatch)
        }
    }

    /// Multiply each coefficient by `g(|k|)`.
    pub fn radial(&self, g: impl Fn(f64) -> f64) -> Field {
        let lat = &self.lattice;
        let mult: Vec<f64> = lat.shells().iter().map(|s| g(s.lambda)).collect();
        Field::from_fn(lat, |i| self.coeffs[i] * mult[lat.shell_of(i)])
    }

    /// `Λ^s u`, i.e. `u_k ↦ |k|^s u_k`.
    pub fn lambda_pow(&self, s: f64) -> Field {
        self.radial(|r| r.powf(s))
    }

    /// Multiply by `m[shell(k)]`.
    pub fn shell_multiply(&self, m: &[C64]) -> Field {
        let lat = &self.lattice;
        Field::from_fn(lat, |i| self.coeffs[i] * m[lat.shell_of(i)])
    }

    /// The conjugate reflection `(Cu)_k = conj(u_{-k})`.
    pub fn conj_reflect(&self) -> Field {
        let lat = &self.lattice;
        Field::from_fn(lat, |i| self.coeffs[lat.neg(i)].conj())
    }

    pub fn scale(&self, c: f64) -> Field {
        Field { lattice: self.lattice.clone(), coeffs: self.coeffs.iter().map(|x| x * c).collect() }
    }

    pub fn scale_c(&self, c: C64) -> Field {
        Field { lattice: self.lattice.clone(), coeffs: self.coeffs.iter().map(|x| x * c).collect() }
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: C64, other: &Field) -> Field {
        debug_assert!(self.lattice.same_lattice(&other.lattice));
        Field {
            lattice: self.lattice.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(x, y)| x + c * y).collect(),
        }
    }

    /// Per-shell bilinear sums `s_μ(x,y) = Σ_{|j|=μ} x_j y_{-j}`.
    pub fn shell_sums(&self, other: &Field) -> Vec<C64> {
        let lat = &self.lattice;
        lat.shells()
            .iter()
            .map(|s| s.members.iter().map(|&j| self.coeffs[j] * other.coeffs[lat.neg(j)]).sum())
            .collect()
    }

    pub fn norm(&self, s: f64) -> f64 {
        sobolev_norm(self, s)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `max_k |u_{-k} - conj(u_k)|`, zero for real functions.
    pub fn reality_defect(&self) -> f64 {
        let lat = &self.lattice;
        (0..lat.len())
            .map(|i| (self.coeffs[lat.neg(i)] - self.coeffs[i].conj()).norm())
            .fold(0.0, f64::max)
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.axpy(C64::new(1.0, 0.0), rhs)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.axpy(C64::new(-1.0, 0.0), rhs)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.scale(-1.0)
    }
}

impl Mul<C64> for &Field {
    type Output = Field;
    fn mul(self, c: C64) -> Field {
        self.scale_c(c)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, c: f64) -> Field {
        self.scale(c)
    }
}

/// `‖u‖_s = (Σ |u_j|² |j|^{2s})^{1/2}`.
pub fn sobolev_norm(f: &Field, s: f64) -> f64 {
    let lat = &f.lattice;
    let w: Vec<f64> = lat.shells().iter().map(|sh| sh.lambda.powf(2.0 * s)).collect();
    f.coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c.norm_sqr() * w[lat.shell_of(i)])
        .sum::<f64>()
        .sqrt()
}

/// `⟨w,h⟩ = Σ_j w_j h_{-j}`.
pub fn pairing(w: &Field, h: &Field) -> Result<C64> {
    w.check_same(h)?;
    let lat = &w.lattice;
    Ok((0..lat.len()).map(|j| w.coeffs[j] * h.coeffs[lat.neg(j)]).sum())
}

/// A pair `(u, v)` of fields. As a state it is a conjugate pair
/// (`v_k = conj(u_{-k})`); as a tangent or a direction it may be general.
#[derive(Debug, Clone)]
pub struct FieldPair {
    pub u: Field,
    pub v: Field,
}

pub type ConjugatePair = FieldPair;

impl FieldPair {
    pub fn new(u: Field, v: Field) -> Result<FieldPair> {
        u.check_same(&v)?;
        Ok(FieldPair { u, v })
    }

    /// The conjugate pair `(u, Cu)`.
    pub fn from_u(u: Field) -> FieldPair {
        let v = u.conj_reflect();
        FieldPair { u, v }
    }

    pub fn zeros(lattice: &Arc<Lattice>) -> FieldPair {
        FieldPair { u: Field::zeros(lattice), v: Field::zeros(lattice) }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.u.lattice
    }

    /// `max_k |v_k - conj(u_{-k})|`.
    pub fn conjugacy_defect(&self) -> f64 {
        let lat = self.lattice();
        (0..lat.len())
            .map(|i| (self.v.coeffs[i] - self.u.coeffs[lat.neg(i)].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, c: f64) -> FieldPair {
        FieldPair { u: self.u.scale(c), v: self.v.scale(c) }
    }

    pub fn scale_c(&self, c: C64) -> FieldPair {
        FieldPair { u: self.u.scale_c(c), v: self.v.scale_c(c) }
    }

    pub fn add(&self, o: &FieldPair) -> FieldPair {
        FieldPair { u: &self.u + &o.u, v: &self.v + &o.v }
    }

    pub fn sub(&self, o: &FieldPair) -> FieldPair {
        FieldPair { u: &self.u - &o.u, v: &self.v - &o.v }
    }

    pub fn axpy(&self, c: C64, o: &FieldPair) -> FieldPair {
        FieldPair { u: self.u.axpy(c, &o.u), v: self.v.axpy(c, &o.v) }
    }

    /// Swap the two components.
    pub fn swapped(&self) -> FieldPair {
        FieldPair { u: self.v.clone(), v: self.u.clone() }
    }

    /// `max(‖u‖_s, ‖v‖_s)`; for conjugate pairs both agree.
    pub fn norm(&self, s: f64) -> f64 {
        self.u.norm(s).max(self.v.norm(s))
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Real pair `(a, b) = (u, ∂_t u)` of the original system.
#[derive(Debug, Clone)]
pub struct PhysicalState {
    pub a: Field,
    pub b: Field,
}

impl PhysicalState {
    pub fn new(a: Field, b: Field) -> Result<PhysicalState> {
        a.check_same(&b)?;
        Ok(PhysicalState { a, b })
    }

    pub fn zeros(lattice: &Arc<Lattice>) -> PhysicalState {
        PhysicalState { a: Field::zeros(lattice), b: Field::zeros(lattice) }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.a.lattice
    }

    pub fn reality_defect(&self) -> f64 {
        self.a.reality_defect().max(self.b.reality_defect())
    }

    pub fn scale(&self, c: f64) -> PhysicalState {
        PhysicalState { a: self.a.scale(c), b: self.b.scale(c) }
    }

    /// `‖a‖_{s+½} + ‖b‖_{s-½}`, the size used for data `ε`.
    pub fn energy_norm(&self, s: f64) -> f64 {
        self.a.norm(s + 0.5) + self.b.norm(s - 0.5)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }
}

/// Per-shell superactions, indexed like [`Lattice::shells`].
#[derive(Debug, Clone)]
pub struct ShellObservables {
    pub keys: Vec<u64>,
    pub s: Vec<f64>,
    pub b: Vec<C64>,
}

impl ShellObservables {
    pub fn get(&self, n: u64) -> Option<(f64, C64)> {
        self.keys.iter().position(|&k| k == n).map(|i| (self.s[i], self.b[i]))
    }
}

/// `S_λ = Σ_{|k|=λ} |u_k|²`, `B_λ = Σ_{|k|=λ} u_k u_{-k}`.
pub fn shell_observables(pair: &ConjugatePair) -> ShellObservables {
    let lat = pair.lattice();
    let s = lat
        .shells()
        .iter()
        .map(|sh| sh.members.iter().map(|&k| pair.u.coeffs[k].norm_sqr()).sum())
        .collect();
    ShellObservables {
        keys: lat.shells().iter().map(|sh| sh.n).collect(),
        s,
        b: pair.u.shell_sums(&pair.u),
    }
}

/// `U_λ = Σ_{|k|=λ} λ³|a_k|² + λ|b_k|²`, indexed like the shells.
pub fn u_lambda(state: &PhysicalState) -> Vec<f64> {
    let lat = state.lattice();
    lat.shells()
        .iter()
        .map(|sh| {
            let l = sh.lambda;
            sh.members
                .iter()
                .map(|&k| l * l * l * state.a.coeffs[k].norm_sqr() + l * state.b.coeffs[k].norm_sqr())
                .sum()
        })
        .collect()
}

/// [`u_lambda`] keyed by shell `n`.
pub fn u_lambda_map(state: &PhysicalState) -> BTreeMap<u64, f64> {
    let lat = state.lattice();
    lat.shells().iter().map(|s| s.n).zip(u_lambda(state)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMeaning {
    U,
    S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhasePolicy {
    Zero,
    Seeded(u64),
}

#[derive(Debug, Clone)]
pub enum Synthesized {
    Physical(PhysicalState),
    Pair(ConjugatePair),
}

/// Build data realizing per-shell targets, splitting shell mass equally over
/// the members. `U` targets give a physical state with `b = 0`; `S` targets
/// give a conjugate pair.
pub fn synth_from_targets(
    lattice: &Arc<Lattice>,
    targets: &BTreeMap<u64, f64>,
    meaning: TargetMeaning,
    phases: PhasePolicy,
) -> Result<Synthesized> {
    Ok(match meaning {
        TargetMeaning::U => Synthesized::Physical(synth_physical(lattice, targets, phases)?),
        TargetMeaning::S => Synthesized::Pair(synth_pair(lattice, targets, phases)?),
    })
}

fn phase_source(phases: PhasePolicy) -> Option<ChaCha8Rng> {
    match phases {
        PhasePolicy::Zero => None,
        PhasePolicy::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
    }
}

fn check_targets(lattice: &Lattice, targets: &BTreeMap<u64, f64>) -> Result<()> {
    for (&n, &t) in targets {
        if lattice.shell_index(n).is_none() {
            return Err(Error::UnknownShell(n));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("target on shell {n} must be finite and >= 0")));
        }
    }
    Ok(())
}

/// Real `a` with `U_λ(a, 0)` equal to the targets.
pub fn synth_physical(
    lattice: &Arc<Lattice>,
    targets: &BTreeMap<u64, f64>,
    phases: PhasePolicy,
) -> Result<PhysicalState> {
    check_targets(lattice, targets)?;
    let mut rng = phase_source(phases);
    let mut a = Field::zeros(lattice);
    for (&n, &t) in targets {
        let sh = lattice.shell(lattice.shell_index(n).unwrap());
        let l = sh.lambda;
        let r = (t / (sh.members.len() as f64 * l * l * l)).sqrt();
        for &k in &sh.members {
            let mk = lattice.neg(k);
            if mk < k {
                continue;
            }
            let theta = rng.as_mut().map_or(0.0, |g| g.gen::<f64>() * std::f64::consts::TAU);
            let c = C64::from_polar(r, theta);
            a.coeffs[k] = c;
            a.coeffs[mk] = c.conj();
        }
    }
    Ok(PhysicalState { b: Field::zeros(lattice), a })
}

/// Conjugate pair with `S_λ` equal to the targets.
pub fn synth_pair(
    lattice: &Arc<Lattice>,
    targets: &BTreeMap<u64, f64>,
    phases: PhasePolicy,
) -> Result<ConjugatePair> {
    check_targets(lattice, targets)?;
    let mut rng = phase_source(phases);
    let mut u = Field::zeros(lattice);
    for (&n, &t) in targets {
        let sh = lattice.shell(lattice.shell_index(n).unwrap());
        let r = (t / sh.members.len() as f64).sqrt();
        for &k in &sh.members {
            let theta = rng.as_mut().map_or(0.0, |g| g.gen::<f64>() * std::f64::consts::TAU);
            u.coeffs[k] = C64::from_polar(r, theta);
        }
    }
    Ok(FieldPair::from_u(u))
}

/// Field with independent complex Gaussian coefficients damped by `|k|^{-decay}`.
pub fn random_field(lattice: &Arc<Lattice>, rng: &mut impl Rng, decay: f64) -> Field {
    Field::from_fn(lattice, |i| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * lattice.radius(i).powf(-decay)
    })
}

/// Random conjugate pair scaled to `‖u‖_s = size`.
pub fn random_pair(lattice: &Arc<Lattice>, rng: &mut impl Rng, decay: f64, s: f64, size: f64) -> ConjugatePair {
    let u = random_field(lattice, rng, decay);
    let n = u.norm(s);
    FieldPair::from_u(u.scale(size / n))
}

/// Random real state scaled to `‖a‖_{s+½} + ‖b‖_{s-½} = size`.
pub fn random_physical(lattice: &Arc<Lattice>, rng: &mut impl Rng, decay: f64, s: f64, size: f64) -> PhysicalState {
    let real = |f: Field| {
        let c = f.conj_reflect();
        (&f + &c).scale(0.5)
    };
    let st = PhysicalState {
        a: real(random_field(lattice, rng, decay + 0.5)),
        b: real(random_field(lattice, rng, decay - 0.5)),
    };
    let n = st.energy_norm(s);
    st.scale(size / n)
}

/// A state file: either a physical pair `(a, b)` or a pair `(u, v)`.
#[derive(Debug, Clone)]
pub enum StateFile {
    Physical(PhysicalState),
    Pair(FieldPair),
}

impl StateFile {
    pub fn lattice(&self) -> &Arc<Lattice> {
        match self {
            StateFile::Physical(s) => s.lattice(),
            StateFile::Pair(p) => p.lattice(),
        }
    }

    fn components(&self) -> (&'static str, [(&'static str, &Field); 2]) {
        match self {
            StateFile::Physical(s) => ("physical", [("a", &s.a), ("b", &s.b)]),
            StateFile::Pair(p) => ("pair", [("u", &p.u), ("v", &p.v)]),
        }
    }
}

/// Serialize a state. Format:
///
/// ```text
/// # kirchhoff spectral state
/// d 1
/// n_max 9
/// kind physical
/// component a
/// 1 0.5e0 0e0
/// ...
/// component b
/// ...
/// ```
///
/// One line `k_1 ... k_d re im` per lattice point. Floats are written in
/// shortest round-trip form, so reading back is bit-exact.
pub fn write_state<W: Write>(state: &StateFile, mut out: W) -> Result<()> {
    let lat = state.lattice();
    let (kind, comps) = state.components();
    let mut text = String::new();
    writeln!(text, "# kirchhoff spectral state").unwrap();
    writeln!(text, "d {}", lat.dim()).unwrap();
    writeln!(text, "n_max {}", lat.n_max()).unwrap();
    writeln!(text, "kind {kind}").unwrap();
    for (tag, f) in comps {
        writeln!(text, "component {tag}").unwrap();
        for i in 0..lat.len() {
            for x in lat.point(i) {
                write!(text, "{x} ").unwrap();
            }
            writeln!(text, "{:e} {:e}", f.coeffs[i].re, f.coeffs[i].im).unwrap();
        }
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Parse the format written by [`write_state`]. Points not listed are zero.
pub fn read_state<R: BufRead>(input: R) -> Result<StateFile> {
    let perr = |line: usize, msg: &str| Error::Parse(format!("line {line}: {msg}"));
    let mut d = None;
    let mut n_max = None;
    let mut kind: Option<String> = None;
    let mut lattice: Option<Arc<Lattice>> = None;
    let mut fields: Vec<(String, Field)> = Vec::new();
    for (ln, line) in input.lines().enumerate() {
        let line = line?;
        let ln = ln + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut parts = t.split_whitespace();
        let head = parts.next().unwrap();
        match head {
            "d" | "n_max" | "kind" | "component" => {
                let val = parts.next().ok_or_else(|| perr(ln, "missing value"))?;
                match head {
                    "d" => d = Some(val.parse::<usize>().map_err(|_| perr(ln, "bad d"))?),
                    "n_max" => n_max = Some(val.parse::<u64>().map_err(|_| perr(ln, "bad n_max"))?),
                    "kind" => kind = Some(val.to_string()),
                    _ => {
                        if lattice.is_none() {
                            let (d, n) = d.zip(n_max).ok_or_else(|| perr(ln, "component before header"))?;
                            lattice = Some(build_lattice(d, n)?);
                        }
                        fields.push((val.to_string(), Field::zeros(lattice.as_ref().unwrap())));
                    }
                }
            }
            _ => {
                let lat = lattice.as_ref().ok_or_else(|| perr(ln, "data before component"))?;
                let nums: Vec<&str> = t.split_whitespace().collect();
                if nums.len() != lat.dim() + 2 {
                    return Err(perr(ln, "wrong number of columns"));
                }
                let k: Vec<i64> = nums[..lat.dim()]
                    .iter()
                    .map(|x| x.parse::<i64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| perr(ln, "bad lattice point"))?;
                let re: f64 = nums[lat.dim()].parse().map_err(|_| perr(ln, "bad real part"))?;
                let im: f64 = nums[lat.dim() + 1].parse().map_err(|_| perr(ln, "bad imaginary part"))?;
                let f = &mut fields.last_mut().unwrap().1;
                f.set(&k, C64::new(re, im)).map_err(|_| perr(ln, "point outside lattice"))?;
            }
        }
    }
    let kind = kind.ok_or_else(|| Error::Parse("missing kind".into()))?;
    let mut take = |tag: &str| -> Result<Field> {
        let pos = fields
            .iter()
            .position(|(t, _)| t == tag)
            .ok_or_else(|| Error::Parse(format!("missing component {tag}")))?;
        Ok(fields.remove(pos).1)
    };
    match kind.as_str() {
        "physical" => Ok(StateFile::Physical(PhysicalState { a: take("a")?, b: take("b")? })),
        "pair" => Ok(StateFile::Pair(FieldPair { u: take("u")?, v: take("v")? })),
        other => Err(Error::Parse(format!("unknown kind {other}"))),
    }
}
