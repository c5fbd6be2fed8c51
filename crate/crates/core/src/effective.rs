//! Truncated effective dynamics on Fourier spheres:
//!
//! `Ṡ_λ = −(3/16) Σ_{α+β=λ} θ_{αβλ} αβλ + (3/8) Σ_{β+λ=α} θ_{βλα} αβλ`,
//! `Ḃ_λ = −2i(1+𝒫)(λ + ¼λ²S_λ) B_λ`,
//!
//! with `θ = Im(B_α B_β B̄_λ)` and the scalar closure
//! `𝒫 = √(1+2φ(Q)) − 1`, `Q = ½ Σ λ(S_λ + Re B_λ)`.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::lattice::{Triple, TripleSet};
use crate::normal_form::{cal_p_of, phi};
use crate::spectral::{shell_observables, ConjugatePair};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Closure {
    FullP,
    ZeroP,
}

impl std::str::FromStr for Closure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Closure> {
        match s {
            "full-P" | "full" => Ok(Closure::FullP),
            "zero-P" | "zero" => Ok(Closure::ZeroP),
            _ => Err(Error::InvalidArgument(format!("unknown closure {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellState {
    pub n: u64,
    pub s: f64,
    pub b: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveState {
    pub shells: Vec<ShellState>,
    pub closure: Closure,
}

impl EffectiveState {
    /// Superactions of a conjugate pair, one entry per lattice shell.
    pub fn from_pair(pair: &ConjugatePair, closure: Closure) -> EffectiveState {
        let obs = shell_observables(pair);
        let shells = obs
            .keys
            .iter()
            .zip(obs.s.iter().zip(&obs.b))
            .map(|(&n, (&s, &b))| ShellState { n, s, b })
            .collect();
        EffectiveState { shells, closure }
    }

    pub fn keys(&self) -> Vec<u64> {
        self.shells.iter().map(|s| s.n).collect()
    }

    /// `Σ λ S_λ`.
    pub fn momentum(&self) -> f64 {
        self.shells.iter().map(|s| (s.n as f64).sqrt() * s.s).sum()
    }

    /// The closure scalar `𝒫`.
    pub fn cal_p(&self) -> Result<f64> {
        match self.closure {
            Closure::ZeroP => Ok(0.0),
            Closure::FullP => {
                let q: f64 = 0.5 * self.shells.iter().map(|s| (s.n as f64).sqrt() * (s.s + s.b.re)).sum::<f64>();
                Ok(cal_p_of(phi(q.max(0.0))?))
            }
        }
    }

    fn position(&self, n: u64) -> Option<usize> {
        self.shells.iter().position(|s| s.n == n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTangent {
    pub ds: Vec<f64>,
    pub db: Vec<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TripleDiagnostics {
    pub omega: f64,
    #[serde(rename = "Omega")]
    pub big_omega: f64,
    #[serde(skip)]
    pub z: C64,
    pub theta: f64,
}

/// Shell radii and triples resolved to positions in a state.
#[derive(Debug, Clone)]
pub struct EffectiveModel {
    keys: Vec<u64>,
    radii: Vec<f64>,
    triples: Vec<Triple>,
    idx: Vec<(usize, usize, usize)>,
}

impl EffectiveModel {
    /// Triples are restricted to those whose three shells are in `keys`.
    pub fn new(keys: &[u64], triples: &TripleSet) -> EffectiveModel {
        let pos: HashMap<u64, usize> = keys.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let mut kept = Vec::new();
        let mut idx = Vec::new();
        for t in triples.iter() {
            if let (Some(&a), Some(&b), Some(&l)) = (pos.get(&t.a), pos.get(&t.b), pos.get(&t.l)) {
                kept.push(*t);
                idx.push((a, b, l));
            }
        }
        EffectiveModel {
            keys: keys.to_vec(),
            radii: keys.iter().map(|&n| (n as f64).sqrt()).collect(),
            triples: kept,
            idx,
        }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    fn check(&self, state: &EffectiveState) -> Result<()> {
        if state.shells.len() != self.keys.len() || state.shells.iter().zip(&self.keys).any(|(s, &n)| s.n != n) {
            return Err(Error::InvalidArgument("state shells do not match the model".into()));
        }
        Ok(())
    }

    fn ds(&self, b: &[C64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for &(ia, ib, il) in &self.idx {
            let z = b[ia] * b[ib] * b[il].conj();
            let w = z.im * self.radii[ia] * self.radii[ib] * self.radii[il];
            if w == 0.0 {
                continue;
            }
            if ia == ib {
                out[il] -= 3.0 / 16.0 * w;
                out[ia] += 3.0 / 8.0 * w;
            } else {
                out[il] -= 3.0 / 8.0 * w;
                out[ia] += 3.0 / 8.0 * w;
                out[ib] += 3.0 / 8.0 * w;
            }
        }
    }

    /// Phase rate `−2(1+𝒫)(λ + ¼λ²S_λ)`.
    fn phase_rate(&self, i: usize, s: f64, cp: f64) -> f64 {
        let l = self.radii[i];
        -2.0 * (1.0 + cp) * (l + 0.25 * l * l * s)
    }

    pub fn rhs(&self, state: &EffectiveState) -> Result<EffectiveTangent> {
        self.check(state)?;
        let s: Vec<f64> = state.shells.iter().map(|x| x.s).collect();
        let b: Vec<C64> = state.shells.iter().map(|x| x.b).collect();
        let mut ds = vec![0.0; s.len()];
        self.ds(&b, &mut ds);
        let cp = state.cal_p()?;
        let db = (0..s.len()).map(|i| b[i] * C64::new(0.0, self.phase_rate(i, s[i], cp))).collect();
        Ok(EffectiveTangent { ds, db })
    }

    /// A rate bounding how fast `S` and the triple phases move; the rotating
    /// frame integrator needs `dt · rate ≤ 1`.
    pub fn slow_rate(&self, state: &EffectiveState) -> Result<f64> {
        let cp = state.cal_p()?;
        let tan = self.rhs(state)?;
        let mut rate: f64 = 0.0;
        for &(a, b, l) in &self.idx {
            let d = self.diag_at(state, a, b, l);
            rate = rate.max(0.5 * (1.0 + cp) * d.big_omega);
        }
        for (sh, ds) in state.shells.iter().zip(&tan.ds) {
            if sh.s > 0.0 {
                rate = rate.max(ds.abs() / sh.s);
            }
        }
        Ok(rate)
    }

    fn diag_at(&self, state: &EffectiveState, a: usize, b: usize, l: usize) -> TripleDiagnostics {
        let sh = &state.shells;
        let (ra, rb, rl) = (self.radii[a], self.radii[b], self.radii[l]);
        let (xa, xb, xl) = (ra * ra * sh[a].s, rb * rb * sh[b].s, rl * rl * sh[l].s);
        let z = sh[a].b * sh[b].b * sh[l].b.conj();
        TripleDiagnostics { omega: xa + xb - xl, big_omega: xa + xb + xl, z, theta: z.im }
    }

    /// Diagnostics of every triple, in model order.
    pub fn diagnostics(&self, state: &EffectiveState) -> Vec<TripleDiagnostics> {
        self.idx.iter().map(|&(a, b, l)| self.diag_at(state, a, b, l)).collect()
    }

    /// Triples whose three shells carry mass.
    pub fn populated(&self, state: &EffectiveState) -> Vec<bool> {
        self.idx
            .iter()
            .map(|&(a, b, l)| state.shells[a].s > 0.0 && state.shells[b].s > 0.0 && state.shells[l].s > 0.0)
            .collect()
    }
}

pub fn effective_rhs(state: &EffectiveState, triples: &TripleSet) -> Result<EffectiveTangent> {
    EffectiveModel::new(&state.keys(), triples).rhs(state)
}

pub fn triple_diagnostics(state: &EffectiveState, triple: &Triple) -> Result<TripleDiagnostics> {
    let (a, b, l) = (
        state.position(triple.a).ok_or(Error::UnknownShell(triple.a))?,
        state.position(triple.b).ok_or(Error::UnknownShell(triple.b))?,
        state.position(triple.l).ok_or(Error::UnknownShell(triple.l))?,
    );
    let model = EffectiveModel::new(&state.keys(), &TripleSet { triples: vec![*triple] });
    Ok(model.diag_at(state, a, b, l))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffScheme {
    Rk4,
    Rotframe,
}

impl std::str::FromStr for EffScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<EffScheme> {
        match s {
            "rk4" => Ok(EffScheme::Rk4),
            "rotframe" => Ok(EffScheme::Rotframe),
            _ => Err(Error::InvalidArgument(format!("unknown scheme {s}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EffectiveTrajectory {
    pub model: EffectiveModel,
    pub times: Vec<f64>,
    pub states: Vec<EffectiveState>,
    /// `𝒫` at each snapshot.
    pub cal_p: Vec<f64>,
}

fn rotate(b: C64, angle: f64) -> C64 {
    b * C64::from_polar(1.0, angle)
}

fn rotframe_step(model: &EffectiveModel, st: &mut EffectiveState, dt: f64, scratch: &mut [f64]) -> Result<()> {
    let n = st.shells.len();
    let cp0 = st.cal_p()?;
    let s0: Vec<f64> = st.shells.iter().map(|x| x.s).collect();
    let b0: Vec<C64> = st.shells.iter().map(|x| x.b).collect();
    model.ds(&b0, scratch);
    let mut half = st.clone();
    for i in 0..n {
        half.shells[i].s = s0[i] + 0.5 * dt * scratch[i];
        half.shells[i].b = rotate(b0[i], 0.5 * dt * model.phase_rate(i, s0[i], cp0));
    }
    let cph = half.cal_p()?;
    let sh: Vec<f64> = half.shells.iter().map(|x| x.s).collect();
    let bh: Vec<C64> = half.shells.iter().map(|x| x.b).collect();
    model.ds(&bh, scratch);
    for i in 0..n {
        st.shells[i].s = s0[i] + dt * scratch[i];
        st.shells[i].b = rotate(b0[i], dt * model.phase_rate(i, sh[i], cph));
    }
    Ok(())
}

fn rk4_step(model: &EffectiveModel, st: &mut EffectiveState, dt: f64) -> Result<()> {
    let k1 = model.rhs(st)?;
    let shift = |base: &EffectiveState, k: &EffectiveTangent, h: f64| {
        let mut out = base.clone();
        for (i, sh) in out.shells.iter_mut().enumerate() {
            sh.s += h * k.ds[i];
            sh.b += k.db[i] * h;
        }
        out
    };
    let k2 = model.rhs(&shift(st, &k1, 0.5 * dt))?;
    let k3 = model.rhs(&shift(st, &k2, 0.5 * dt))?;
    let k4 = model.rhs(&shift(st, &k3, dt))?;
    for (i, sh) in st.shells.iter_mut().enumerate() {
        sh.s += dt / 6.0 * (k1.ds[i] + 2.0 * k2.ds[i] + 2.0 * k3.ds[i] + k4.ds[i]);
        sh.b += (k1.db[i] + k2.db[i] * 2.0 + k3.db[i] * 2.0 + k4.db[i]) * (dt / 6.0);
    }
    Ok(())
}

/// Integrate the truncated system on `[0, T]`, snapshots every `stride` steps.
pub fn integrate_effective(
    state: &EffectiveState,
    triples: &TripleSet,
    dt: f64,
    t_end: f64,
    scheme: EffScheme,
    stride: usize,
) -> Result<EffectiveTrajectory> {
    if !(dt > 0.0) || !(t_end >= 0.0) || stride == 0 {
        return Err(Error::InvalidArgument("need dt > 0, T >= 0, stride >= 1".into()));
    }
    let model = EffectiveModel::new(&state.keys(), triples);
    model.check(state)?;
    let limit = match scheme {
        EffScheme::Rk4 => {
            let lmax = model.radii.iter().cloned().fold(0.0, f64::max);
            0.1 / (lmax * (1.0 + state.cal_p()?))
        }
        EffScheme::Rotframe => {
            let r = model.slow_rate(state)?;
            if r > 0.0 {
                1.0 / r
            } else {
                f64::INFINITY
            }
        }
    };
    if dt > limit {
        return Err(Error::Cfl { dt, limit });
    }
    let steps = if t_end == 0.0 { 0 } else { (t_end / dt - 1e-9).ceil().max(1.0) as usize };
    let h = if steps == 0 { 0.0 } else { t_end / steps as f64 };
    let mut st = state.clone();
    let mut traj = EffectiveTrajectory {
        model: model.clone(),
        times: vec![0.0],
        states: vec![st.clone()],
        cal_p: vec![st.cal_p()?],
    };
    let mut scratch = vec![0.0; st.shells.len()];
    for n in 1..=steps {
        match scheme {
            EffScheme::Rotframe => rotframe_step(&model, &mut st, h, &mut scratch)?,
            EffScheme::Rk4 => rk4_step(&model, &mut st, h)?,
        }
        for sh in st.shells.iter_mut() {
            if !(sh.s.is_finite() && sh.b.re.is_finite() && sh.b.im.is_finite()) {
                return Err(Error::NonFinite { step: n });
            }
            if sh.s < 0.0 {
                if sh.s < -1e-12 {
                    return Err(Error::NegativeS { n: sh.n, value: sh.s, step: n });
                }
                sh.s = 0.0;
            }
        }
        if n % stride == 0 || n == steps {
            traj.times.push(if n == steps { t_end } else { n as f64 * h });
            traj.cal_p.push(st.cal_p()?);
            traj.states.push(st.clone());
        }
    }
    Ok(traj)
}

impl EffectiveTrajectory {
    /// CSV `t,P,S_<n>...,absB_<n>...,argB_<n>...`; the `P` column holds the
    /// closure scalar `𝒫`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let keys = &self.model.keys;
        let mut header = vec!["t".to_string(), "P".into()];
        header.extend(keys.iter().map(|n| format!("S_{n}")));
        header.extend(keys.iter().map(|n| format!("absB_{n}")));
        header.extend(keys.iter().map(|n| format!("argB_{n}")));
        w.write_record(&header)?;
        for ((t, st), cp) in self.times.iter().zip(&self.states).zip(&self.cal_p) {
            let mut row = vec![format!("{t:e}"), format!("{cp:e}")];
            row.extend(st.shells.iter().map(|s| format!("{:e}", s.s)));
            row.extend(st.shells.iter().map(|s| format!("{:e}", s.b.norm())));
            row.extend(st.shells.iter().map(|s| format!("{:e}", s.b.arg())));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV `t,n_a,n_b,n_l,omega,Omega,theta` over populated triples.
    pub fn write_triple_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "n_a", "n_b", "n_l", "omega", "Omega", "theta"])?;
        for (t, st) in self.times.iter().zip(&self.states) {
            let diags = self.model.diagnostics(st);
            for ((tr, d), pop) in self.model.triples.iter().zip(&diags).zip(self.model.populated(st)) {
                if !pop {
                    continue;
                }
                w.write_record(&[
                    format!("{t:e}"),
                    tr.a.to_string(),
                    tr.b.to_string(),
                    tr.l.to_string(),
                    format!("{:e}", d.omega),
                    format!("{:e}", d.big_omega),
                    format!("{:e}", d.theta),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    /// `(n, max_t |S_λ(t)/S_λ(0) − 1|)` over shells populated at `t = 0`.
    pub per_shell: Vec<(u64, f64)>,
    pub max_growth: f64,
    /// `min_t min_triple |ω|/Ω` over triples of populated shells.
    pub worst_margin: Option<f64>,
    /// Shells with `S_λ(0) = 0`, excluded from the growth factors.
    pub gamma0: Vec<u64>,
    /// `max_t max_λ (|B_λ(t)| − S_λ(t))`, positive if `|B| ≤ S` is violated.
    pub b_over_s_excess: f64,
}

pub fn growth_report(traj: &EffectiveTrajectory) -> Result<GrowthReport> {
    if traj.states.len() < 2 {
        return Err(Error::InvalidArgument("growth report needs at least two snapshots".into()));
    }
    let first = &traj.states[0];
    let mut per_shell = Vec::new();
    let mut gamma0 = Vec::new();
    for (i, sh) in first.shells.iter().enumerate() {
        if sh.s > 0.0 {
            let g = traj.states.iter().map(|st| (st.shells[i].s / sh.s - 1.0).abs()).fold(0.0, f64::max);
            per_shell.push((sh.n, g));
        } else {
            gamma0.push(sh.n);
        }
    }
    let max_growth = per_shell.iter().map(|x| x.1).fold(0.0, f64::max);
    let pop0 = traj.model.populated(first);
    let mut worst: Option<f64> = None;
    for st in &traj.states {
        for (d, &p) in traj.model.diagnostics(st).iter().zip(&pop0) {
            if p && d.big_omega > 0.0 {
                let m = d.omega.abs() / d.big_omega;
                worst = Some(worst.map_or(m, |w: f64| w.min(m)));
            }
        }
    }
    let b_over_s_excess = traj
        .states
        .iter()
        .flat_map(|st| st.shells.iter().map(|s| s.b.norm() - s.s))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(GrowthReport { per_shell, max_growth, worst_margin: worst, gamma0, b_over_s_excess })
}
