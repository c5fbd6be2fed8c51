//! The transformation chain `Φ = Φ⁽¹⁾∘Φ⁽²⁾∘Φ⁽³⁾∘Φ⁽⁴⁾∘Φ⁽⁵⁾`, the transformed
//! vector fields and the order-7 remainder.
//!
//! Per stage, `Direction::Forward` applies the map `Φ⁽ⁱ⁾` itself, which
//! sends the new variables to the old ones (normal side to physical side).
//! The composed chain uses the explicit [`ChainDirection`] instead.
//!
//! Nonlinear fields are assembled with the linear part `𝒟₁` subtracted
//! analytically, so the cancellations in [`NormalForm::residual_w7`] only
//! involve cubic-size quantities and stay far above rounding.

pub mod coeffs;
pub mod cubic;
pub mod linear;
pub mod oracle;
pub mod phi3;
pub mod quintic;

use std::sync::{Arc, OnceLock};

use crate::constants;
use crate::dynamics::{m0, m1};
use crate::lattice::Lattice;
use crate::spectral::{pairing, FieldPair, PhysicalState};
use crate::{Error, Result, C64};

use coeffs::{phi5_coefficient_rad, w5_coefficient, y_coefficient, Family, W5Term, YTerm};
use cubic::CubicTables;
pub use linear::{phi1, phi2_forward, phi2_inverse};
pub use phi3::{cal_p_of, phi, phi3, phi3_scalars, q_value, rho, Phi3Scalars};
use quintic::{QuinticOperator, TermSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Direction> {
        match s {
            "forward" => Ok(Direction::Forward),
            "inverse" => Ok(Direction::Inverse),
            _ => Err(Error::InvalidArgument(format!("unknown direction {s}"))),
        }
    }
}

/// Direction of the composed chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainDirection {
    /// `(a,b) ↦ (u,v) = Φ⁻¹(a,b)`.
    ToNormal,
    /// `(u,v) ↦ (a,b) = Φ(u,v)`.
    ToPhysical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Phi1,
    Phi2,
    Phi3,
    Phi4,
    Phi5,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Phi1 => "phi1",
            Stage::Phi2 => "phi2",
            Stage::Phi3 => "phi3",
            Stage::Phi4 => "phi4",
            Stage::Phi5 => "phi5",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Stage> {
        [Stage::Phi1, Stage::Phi2, Stage::Phi3, Stage::Phi4, Stage::Phi5]
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage {s}")))
    }
}

/// A state somewhere along the chain.
#[derive(Debug, Clone)]
pub enum ChainState {
    Physical(PhysicalState),
    Pair(FieldPair),
}

/// Stopping rule for the fixed-point iterations.
#[derive(Debug, Clone, Copy)]
pub struct FixedPoint {
    /// Relative update tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl FixedPoint {
    /// Policy for the stage inverses.
    pub const STAGE: FixedPoint = FixedPoint { tol: 1e-13, max_iter: 50 };
    /// Policy for the remainder computation: iterate down to rounding.
    pub const TIGHT: FixedPoint = FixedPoint { tol: 1e-15, max_iter: 100 };

    /// Iterate `x ← map(x)` from `start`, measuring updates in `‖·‖_s`.
    /// Stops at `tol`, or when the update stagnates at rounding level.
    pub fn run(
        &self,
        start: FieldPair,
        s: f64,
        mut map: impl FnMut(&FieldPair) -> FieldPair,
    ) -> Result<(FieldPair, usize)> {
        let mut x = start;
        let mut prev = f64::INFINITY;
        for it in 1..=self.max_iter {
            let next = map(&x);
            if !next.is_finite() {
                return Err(Error::NoConvergence { iterations: it, update: f64::INFINITY });
            }
            let scale = next.norm(s);
            let upd = if scale == 0.0 { 0.0 } else { next.sub(&x).norm(s) / scale };
            x = next;
            if upd <= self.tol || (upd < 1e-12 && upd >= prev) {
                return Ok((x, it));
            }
            prev = upd;
        }
        Err(Error::NoConvergence { iterations: self.max_iter, update: prev })
    }
}

/// `𝒟₁(w,z) = (−iΛw, iΛz)`.
pub fn d1(pair: &FieldPair) -> FieldPair {
    FieldPair { u: pair.u.lambda_pow(1.0).scale_c(C64::new(0.0, -1.0)), v: pair.v.lambda_pow(1.0).scale_c(C64::new(0.0, 1.0)) }
}

/// `(X₃⁺)₁ = −(i/4) Σ_{|j|=|k|} w_j w_{−j} |j|² z_k`, second component by symmetry.
pub fn x3plus(pair: &FieldPair) -> FieldPair {
    let lat = pair.lattice();
    let mult = |s: Vec<C64>, c: f64| -> Vec<C64> {
        s.iter().zip(lat.shells()).map(|(x, sh)| x * C64::new(0.0, c * sh.lambda * sh.lambda)).collect()
    };
    let first = mult(pair.u.shell_sums(&pair.u), -0.25);
    let second = mult(pair.v.shell_sums(&pair.v), 0.25);
    FieldPair { u: pair.v.shell_multiply(&first), v: pair.u.shell_multiply(&second) }
}

/// The field after the third stage minus its linear part:
/// `X(η,ψ) − 𝒟₁(η,ψ)` with
/// `X₁ = −i√(1+2P)Λη + i/(4(1+2P)) (⟨Λψ,Λψ⟩ − ⟨Λη,Λη⟩) ψ`.
pub fn x_nonlinear(pair: &FieldPair) -> Result<FieldPair> {
    let p = phi(q_value(pair).max(0.0))?;
    let cm1 = cal_p_of(p);
    let le = pair.u.lambda_pow(1.0);
    let lp = pair.v.lambda_pow(1.0);
    let diff = pairing(&lp, &lp)? - pairing(&le, &le)?;
    let f = C64::new(0.0, 0.25 / (1.0 + 2.0 * p)) * diff;
    Ok(FieldPair {
        u: le.scale_c(C64::new(0.0, -cm1)).axpy(f, &pair.v),
        v: lp.scale_c(C64::new(0.0, cm1)).axpy(f, &pair.u),
    })
}

/// The full field `X(η,ψ)` after the third stage.
pub fn x_field(pair: &FieldPair) -> Result<FieldPair> {
    Ok(d1(pair).add(&x_nonlinear(pair)?))
}

fn i_unit() -> C64 {
    C64::new(0.0, 1.0)
}

/// The degree-5 correction of the fifth stage (eight families; `b11`, `d11` vanish).
pub fn phi5_terms() -> Vec<TermSpec> {
    let one = C64::new(1.0, 0.0);
    [
        (Family::A11, "a11", "uuuuu"),
        (Family::C11, "c11", "uuvvu"),
        (Family::F11, "f11", "vvvvu"),
        (Family::A12, "a12", "uuuuv"),
        (Family::B12, "b12", "uuuvv"),
        (Family::C12, "c12", "uuvvv"),
        (Family::D12, "d12", "uvvvv"),
        (Family::F12, "f12", "vvvvv"),
    ]
    .into_iter()
    .map(|(fam, name, pattern)| TermSpec {
        name,
        factor: one,
        pattern,
        coef: Box::new(move |j, l, k| phi5_coefficient_rad(fam, j, l, k)),
    })
    .collect()
}

/// The eight `Y` operators whose sum is the degree-5 part `X₅⁺`.
pub fn y_terms() -> Vec<TermSpec> {
    [
        (YTerm::Y11_4, "Y11_4", "uuuuu"),
        (YTerm::Y11_2, "Y11_2", "uuvvu"),
        (YTerm::Y11_0, "Y11_0", "vvvvu"),
        (YTerm::Y12_4, "Y12_4", "uuuuv"),
        (YTerm::Y12_3, "Y12_3", "uuuvv"),
        (YTerm::Y12_2, "Y12_2", "uuvvv"),
        (YTerm::Y12_1, "Y12_1", "uvvvv"),
        (YTerm::Y12_0, "Y12_0", "vvvvv"),
    ]
    .into_iter()
    .map(|(t, name, pattern)| TermSpec {
        name,
        factor: i_unit(),
        pattern,
        coef: Box::new(move |j, l, k| y_coefficient(t, j, l, k)),
    })
    .collect()
}

/// The four resonant sums of the degree-5 normal form.
pub fn w5_terms() -> Vec<TermSpec> {
    [
        (W5Term::EqualPair, "equal_pair", "uuvvu"),
        (W5Term::Sum, "sum", "uuuuv"),
        (W5Term::Diagonal, "diagonal", "uuuvv"),
        (W5Term::Difference, "difference", "uuvvv"),
    ]
    .into_iter()
    .map(|(t, name, pattern)| TermSpec {
        name,
        factor: i_unit(),
        pattern,
        coef: Box::new(move |j, l, k| w5_coefficient(t, j, l, k)),
    })
    .collect()
}

/// Result of [`NormalForm::residual_scaling`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct ResidualScaling {
    pub eps: [f64; 2],
    /// `‖W_{≥7}‖₀` at each amplitude.
    pub norms: [f64; 2],
    /// `log(norm₀/norm₁) / log(eps₀/eps₁)`.
    pub exponent: f64,
}

/// Per-lattice context: radius tables of all operators, built on first use.
pub struct NormalForm {
    lattice: Arc<Lattice>,
    cubic: CubicTables,
    phi5_op: OnceLock<QuinticOperator>,
    y_op: OnceLock<QuinticOperator>,
    w5_op: OnceLock<QuinticOperator>,
}

impl NormalForm {
    pub fn new(lattice: &Arc<Lattice>) -> NormalForm {
        NormalForm {
            lattice: lattice.clone(),
            cubic: CubicTables::new(lattice),
            phi5_op: OnceLock::new(),
            y_op: OnceLock::new(),
            w5_op: OnceLock::new(),
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn m0(&self) -> f64 {
        m0(self.lattice.dim())
    }

    pub fn m1(&self) -> f64 {
        m1(self.lattice.dim())
    }

    pub fn cubic(&self) -> &CubicTables {
        &self.cubic
    }

    pub fn phi5_operator(&self) -> &QuinticOperator {
        self.phi5_op.get_or_init(|| QuinticOperator::new(&self.lattice, &phi5_terms()))
    }

    pub fn y_operator(&self) -> &QuinticOperator {
        self.y_op.get_or_init(|| QuinticOperator::new(&self.lattice, &y_terms()))
    }

    pub fn w5_operator(&self) -> &QuinticOperator {
        self.w5_op.get_or_init(|| QuinticOperator::new(&self.lattice, &w5_terms()))
    }

    fn check(&self, pair: &FieldPair) -> Result<()> {
        if pair.lattice().same_lattice(&self.lattice) {
            Ok(())
        } else {
            Err(Error::LatticeMismatch)
        }
    }

    /// `Φ⁽⁴⁾(w,z) = (I + M(w,z))(w,z)`; the inverse by fixed point
    /// `w ← η − M(w)w` in `‖·‖_{m₀}`.
    pub fn phi4(&self, dir: Direction, pair: &FieldPair) -> Result<FieldPair> {
        self.check(pair)?;
        match dir {
            Direction::Forward => Ok(pair.add(&self.cubic.correction(pair))),
            Direction::Inverse => FixedPoint::STAGE
                .run(pair.clone(), self.m0(), |w| pair.sub(&self.cubic.correction(w)))
                .map(|r| r.0),
        }
    }

    /// `𝓜(u,v)(u,v)`.
    pub fn phi5_correction(&self, pair: &FieldPair) -> FieldPair {
        self.phi5_operator().apply(pair)
    }

    /// `Φ⁽⁵⁾(u,v) = (I + 𝓜(u,v))(u,v)`; the inverse by fixed point in `‖·‖_{m₁}`.
    pub fn phi5(&self, dir: Direction, pair: &FieldPair) -> Result<FieldPair> {
        self.check(pair)?;
        match dir {
            Direction::Forward => Ok(pair.add(&self.phi5_correction(pair))),
            Direction::Inverse => FixedPoint::STAGE
                .run(pair.clone(), self.m1(), |u| pair.sub(&self.phi5_correction(u)))
                .map(|r| r.0),
        }
    }

    /// `𝒦(u,v)[dir]`, the differential of `𝓜(u,v)(u,v)`.
    pub fn phi5_differential(&self, pair: &FieldPair, dir: &FieldPair) -> FieldPair {
        self.phi5_operator().derivative(pair, dir)
    }

    /// Apply one stage to a chain state.
    pub fn apply_stage(&self, stage: Stage, dir: Direction, state: &ChainState) -> Result<ChainState> {
        let wrong = || Error::InvalidArgument(format!("{} {:?} got the wrong kind of state", stage.name(), dir));
        let out = match (stage, dir, state) {
            (Stage::Phi1, _, ChainState::Physical(s)) => ChainState::Physical(phi1(dir, s)),
            (Stage::Phi2, Direction::Forward, ChainState::Pair(p)) => ChainState::Physical(phi2_forward(p)),
            (Stage::Phi2, Direction::Inverse, ChainState::Physical(s)) => ChainState::Pair(phi2_inverse(s)),
            (Stage::Phi3, _, ChainState::Pair(p)) => ChainState::Pair(phi3(dir, p).map_err(|e| e.at_stage("phi3"))?),
            (Stage::Phi4, _, ChainState::Pair(p)) => {
                ChainState::Pair(self.phi4(dir, p).map_err(|e| e.at_stage("phi4"))?)
            }
            (Stage::Phi5, _, ChainState::Pair(p)) => {
                ChainState::Pair(self.phi5(dir, p).map_err(|e| e.at_stage("phi5"))?)
            }
            _ => return Err(wrong()),
        };
        Ok(out)
    }

    /// `Φ⁻¹(a,b)`: the normal coordinates of a physical state.
    pub fn to_normal(&self, state: &PhysicalState) -> Result<FieldPair> {
        let fg = phi2_inverse(&phi1(Direction::Inverse, state));
        self.from_fg(&fg)
    }

    /// `(Φ⁽³⁾∘Φ⁽⁴⁾∘Φ⁽⁵⁾)⁻¹ (f,g)`.
    pub fn from_fg(&self, fg: &FieldPair) -> Result<FieldPair> {
        let eta = phi3(Direction::Inverse, fg).map_err(|e| e.at_stage("phi3"))?;
        let w = self.phi4(Direction::Inverse, &eta).map_err(|e| e.at_stage("phi4"))?;
        self.phi5(Direction::Inverse, &w).map_err(|e| e.at_stage("phi5"))
    }

    /// `Φ⁽³⁾∘Φ⁽⁴⁾∘Φ⁽⁵⁾ (u,v)`.
    pub fn to_fg(&self, pair: &FieldPair) -> Result<FieldPair> {
        let w = self.phi5(Direction::Forward, pair).map_err(|e| e.at_stage("phi5"))?;
        let eta = self.phi4(Direction::Forward, &w).map_err(|e| e.at_stage("phi4"))?;
        phi3(Direction::Forward, &eta).map_err(|e| e.at_stage("phi3"))
    }

    /// `Φ(u,v)`: the physical state of normal coordinates.
    pub fn to_physical(&self, pair: &FieldPair) -> Result<PhysicalState> {
        Ok(phi1(Direction::Forward, &phi2_forward(&self.to_fg(pair)?)))
    }

    pub fn full_chain(&self, dir: ChainDirection, state: &ChainState) -> Result<ChainState> {
        match (dir, state) {
            (ChainDirection::ToNormal, ChainState::Physical(s)) => Ok(ChainState::Pair(self.to_normal(s)?)),
            (ChainDirection::ToPhysical, ChainState::Pair(p)) => Ok(ChainState::Physical(self.to_physical(p)?)),
            _ => Err(Error::InvalidArgument("full chain got the wrong kind of state".into())),
        }
    }

    /// `𝒫(w,z) = √(1 + 2P(Φ⁽⁴⁾(w,z))) − 1`.
    pub fn cal_p(&self, wz: &FieldPair) -> Result<f64> {
        let eta = self.phi4(Direction::Forward, wz)?;
        Ok(cal_p_of(phi(q_value(&eta).max(0.0))?))
    }

    /// `X⁺(w,z) − 𝒟₁(w,z)` where `X⁺ = (I+K)⁻¹ X∘Φ⁽⁴⁾`.
    pub fn xplus_nonlinear(&self, wz: &FieldPair) -> Result<FieldPair> {
        let eta = self.phi4(Direction::Forward, wz)?;
        let d1w = d1(wz);
        let rhs = x_nonlinear(&eta)?
            .add(&d1(&self.cubic.correction(wz)))
            .sub(&self.cubic.k_apply(wz, &d1w));
        FixedPoint::TIGHT.run(rhs.clone(), 0.0, |x| rhs.sub(&self.cubic.k_apply(wz, x))).map(|r| r.0)
    }

    /// The field after the fourth stage.
    pub fn xplus(&self, wz: &FieldPair) -> Result<FieldPair> {
        Ok(d1(wz).add(&self.xplus_nonlinear(wz)?))
    }

    /// `X₅⁺`, the degree-5 part of `X⁺` (sum of the eight `Y` operators).
    pub fn x5plus(&self, pair: &FieldPair) -> FieldPair {
        self.y_operator().apply(pair)
    }

    /// The resonant degree-5 normal form `W₅`.
    pub fn w5(&self, pair: &FieldPair) -> FieldPair {
        self.w5_operator().apply(pair)
    }

    /// `W(u,v) − 𝒟₁(u,v)` where `W = (I+𝒦)⁻¹ X⁺∘Φ⁽⁵⁾`.
    pub fn w_nonlinear(&self, pair: &FieldPair) -> Result<FieldPair> {
        self.check(pair)?;
        let wz = self.phi5(Direction::Forward, pair)?;
        let d1u = d1(pair);
        let rhs = self
            .xplus_nonlinear(&wz)?
            .add(&d1(&self.phi5_correction(pair)))
            .sub(&self.phi5_differential(pair, &d1u));
        FixedPoint::TIGHT.run(rhs.clone(), 0.0, |x| rhs.sub(&self.phi5_differential(pair, x))).map(|r| r.0)
    }

    /// The field in the final normal coordinates.
    pub fn w_field(&self, pair: &FieldPair) -> Result<FieldPair> {
        Ok(d1(pair).add(&self.w_nonlinear(pair)?))
    }

    /// `W_{≥7} = W − (1 + 𝒫(Φ⁽⁵⁾))(𝒟₁ + X₃⁺) − W₅`.
    pub fn residual_w7(&self, pair: &FieldPair) -> Result<FieldPair> {
        let wn = self.w_nonlinear(pair)?;
        let cp = self.cal_p(&self.phi5(Direction::Forward, pair)?)?;
        let x3 = x3plus(pair);
        Ok(wn
            .sub(&d1(pair).scale(cp))
            .sub(&x3.scale(1.0 + cp))
            .sub(&self.w5(pair)))
    }

    /// Evaluate the remainder on `base` rescaled to `‖u‖_{m₁} = eps[i]` and
    /// fit the homogeneity exponent.
    pub fn residual_scaling(&self, base: &FieldPair, eps: [f64; 2]) -> Result<ResidualScaling> {
        let n = base.u.norm(self.m1());
        let mut norms = [0.0; 2];
        for (out, e) in norms.iter_mut().zip(eps) {
            *out = self.residual_w7(&base.scale(e / n))?.norm(0.0);
        }
        let exponent = (norms[0] / norms[1]).ln() / (eps[0] / eps[1]).ln();
        Ok(ResidualScaling { eps, norms, exponent })
    }

    /// Largest `‖w‖_{m₁}` for which the fifth-stage inverse is trusted.
    pub fn phi5_ball(&self) -> f64 {
        if self.lattice.dim() == 1 {
            constants::PHI5_BALL_D1
        } else {
            constants::PHI5_BALL_D2
        }
    }
}
