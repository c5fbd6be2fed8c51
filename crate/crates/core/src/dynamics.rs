//! The Kirchhoff flow in Fourier variables:
//! `ȧ_k = b_k`, `ḃ_k = -|k|²(1 + P) a_k`, `P = ⟨Λa, Λa⟩`,
//! with energy `H = ½⟨b,b⟩ + ½P + ¼P²`.

use std::io::Write;
use std::sync::Arc;

use crate::lattice::Lattice;
use crate::spectral::{pairing, u_lambda, Field, PhysicalState};
use crate::{Error, Result, C64};

/// `m₀ = 1` for `d = 1`, `3/2` otherwise.
pub fn m0(d: usize) -> f64 {
    if d == 1 {
        1.0
    } else {
        1.5
    }
}

/// `m₁ = 1` for `d = 1`, `2` otherwise.
pub fn m1(d: usize) -> f64 {
    if d == 1 {
        1.0
    } else {
        2.0
    }
}

/// `P(a) = ⟨Λa, Λa⟩ = Σ |j|² a_j a_{-j}`.
pub fn p_value(a: &Field) -> f64 {
    let la = a.lambda_pow(1.0);
    pairing(&la, &la).expect("same lattice").re
}

pub fn kirchhoff_rhs(state: &PhysicalState) -> PhysicalState {
    let p = p_value(&state.a);
    PhysicalState { a: state.b.clone(), b: state.a.radial(|r| -r * r * (1.0 + p)) }
}

pub fn hamiltonian(state: &PhysicalState) -> f64 {
    let p = p_value(&state.a);
    0.5 * pairing(&state.b, &state.b).expect("same lattice").re + 0.5 * p + 0.25 * p * p
}

/// Largest admissible step, `0.2 / (λ_max √(1 + P(0)))`.
pub fn cfl_limit(state: &PhysicalState) -> f64 {
    0.2 / (state.lattice().lambda_max() * (1.0 + p_value(&state.a)).sqrt())
}

/// `min(user, 0.1 / (λ_max √(1 + P(0))))`.
pub fn suggested_dt(state: &PhysicalState, user: f64) -> f64 {
    user.min(0.5 * cfl_limit(state))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Leapfrog,
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Scheme> {
        match s {
            "leapfrog" => Ok(Scheme::Leapfrog),
            "rk4" => Ok(Scheme::Rk4),
            _ => Err(Error::InvalidArgument(format!("unknown scheme {s}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub t: f64,
    pub h: f64,
    /// `‖a‖_{m₁+½} + ‖b‖_{m₁-½}`.
    pub norm_m1: f64,
    /// `U_λ`, one entry per shell.
    pub u: Vec<f64>,
}

impl Diagnostics {
    pub fn of(t: f64, state: &PhysicalState) -> Diagnostics {
        let d = state.lattice().dim();
        Diagnostics { t, h: hamiltonian(state), norm_m1: state.energy_norm(m1(d)), u: u_lambda(state) }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhysicalState>,
    pub diagnostics: Vec<Diagnostics>,
}

impl Trajectory {
    pub fn last(&self) -> &PhysicalState {
        self.states.last().expect("trajectory is never empty")
    }

    /// `max_t |H(t) - H(0)| / H(0)`; zero for the zero state.
    pub fn max_energy_drift(&self) -> f64 {
        let h0 = self.diagnostics[0].h;
        if h0 == 0.0 {
            return 0.0;
        }
        self.diagnostics.iter().map(|d| (d.h - h0).abs() / h0).fold(0.0, f64::max)
    }

    /// CSV with header `t,H,norm_m1,U_<n>...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let lat = self.states[0].lattice();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "H".into(), "norm_m1".into()];
        header.extend(lat.shells().iter().map(|s| format!("U_{}", s.n)));
        w.write_record(&header)?;
        for d in &self.diagnostics {
            let mut row = vec![format!("{:e}", d.t), format!("{:e}", d.h), format!("{:e}", d.norm_m1)];
            row.extend(d.u.iter().map(|x| format!("{x:e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Raw state buffers for the inner loop.
struct Stepper {
    k2: Vec<f64>,
    neg: Vec<usize>,
}

impl Stepper {
    fn new(lat: &Lattice) -> Stepper {
        let k2 = (0..lat.len()).map(|i| lat.shell(lat.shell_of(i)).n as f64).collect();
        let neg = (0..lat.len()).map(|i| lat.neg(i)).collect();
        Stepper { k2, neg }
    }

    fn p(&self, a: &[C64]) -> f64 {
        a.iter().enumerate().map(|(j, x)| self.k2[j] * (x * a[self.neg[j]]).re).sum()
    }

    fn kick(&self, a: &[C64], b: &mut [C64], h: f64) {
        let f = 1.0 + self.p(a);
        for ((bj, aj), k2) in b.iter_mut().zip(a).zip(&self.k2) {
            *bj -= aj * (h * k2 * f);
        }
    }

    fn leapfrog(&self, a: &mut [C64], b: &mut [C64], dt: f64) {
        self.kick(a, b, 0.5 * dt);
        for (aj, bj) in a.iter_mut().zip(b.iter()) {
            *aj += bj * dt;
        }
        self.kick(a, b, 0.5 * dt);
    }

    fn rhs(&self, a: &[C64], b: &[C64], da: &mut [C64], db: &mut [C64]) {
        let f = 1.0 + self.p(a);
        for j in 0..a.len() {
            da[j] = b[j];
            db[j] = -a[j] * (self.k2[j] * f);
        }
    }

    fn rk4(&self, a: &mut [C64], b: &mut [C64], dt: f64) {
        let n = a.len();
        let z = C64::new(0.0, 0.0);
        let mut ka: Vec<Vec<C64>> = vec![vec![z; n]; 4];
        let mut kb = ka.clone();
        let mut ta = vec![z; n];
        let mut tb = vec![z; n];
        for s in 0..4 {
            if s == 0 {
                ta.copy_from_slice(a);
                tb.copy_from_slice(b);
            } else {
                let c = if s == 3 { dt } else { 0.5 * dt };
                for j in 0..n {
                    ta[j] = a[j] + ka[s - 1][j] * c;
                    tb[j] = b[j] + kb[s - 1][j] * c;
                }
            }
            self.rhs(&ta, &tb, &mut ka[s], &mut kb[s]);
        }
        for j in 0..n {
            a[j] += (ka[0][j] + ka[1][j] * 2.0 + ka[2][j] * 2.0 + ka[3][j]) * (dt / 6.0);
            b[j] += (kb[0][j] + kb[1][j] * 2.0 + kb[2][j] * 2.0 + kb[3][j]) * (dt / 6.0);
        }
    }
}

/// Integrate over `[0, T]`. The step is shrunk to `T / ceil(T / dt)` so the
/// run ends exactly at `T`; snapshots every `stride` steps and at the end.
pub fn integrate_physical(
    state: &PhysicalState,
    dt: f64,
    t_end: f64,
    scheme: Scheme,
    stride: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end >= 0.0) || stride == 0 {
        return Err(Error::InvalidArgument("need dt > 0, T >= 0, stride >= 1".into()));
    }
    let limit = cfl_limit(state);
    if dt > limit {
        return Err(Error::Cfl { dt, limit });
    }
    let lat: &Arc<Lattice> = state.lattice();
    let stepper = Stepper::new(lat);
    let steps = if t_end == 0.0 { 0 } else { (t_end / dt - 1e-9).ceil().max(1.0) as usize };
    let h = if steps == 0 { 0.0 } else { t_end / steps as f64 };
    let mut a = state.a.coeffs.clone();
    let mut b = state.b.coeffs.clone();
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![state.clone()],
        diagnostics: vec![Diagnostics::of(0.0, state)],
    };
    for n in 1..=steps {
        match scheme {
            Scheme::Leapfrog => stepper.leapfrog(&mut a, &mut b, h),
            Scheme::Rk4 => stepper.rk4(&mut a, &mut b, h),
        }
        if !stepper.p(&a).is_finite() || !b.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
            return Err(Error::NonFinite { step: n });
        }
        if n % stride == 0 || n == steps {
            let t = if n == steps { t_end } else { n as f64 * h };
            let st = PhysicalState {
                a: Field { lattice: lat.clone(), coeffs: a.clone() },
                b: Field { lattice: lat.clone(), coeffs: b.clone() },
            };
            traj.diagnostics.push(Diagnostics::of(t, &st));
            traj.times.push(t);
            traj.states.push(st);
        }
    }
    Ok(traj)
}
