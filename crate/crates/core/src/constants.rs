//! Empirically calibrated constants. Each value was measured once with the
//! procedure named next to it and then frozen with headroom; tests check
//! fresh samples against these values.
//!
//! Samples: random conjugate pairs with Gaussian coefficients decaying like
//! `|k|^{-σ}`, `σ ∈ {1.5, 2, 3}`, seeds 0..8, on d=1 `n_max = 64` and
//! d=2 `n_max = 20`.

/// Fifth-stage inverse: trusted radius in `‖·‖_{m₁}`, `d = 1`.
/// Smallest measured radius where the round trip still closes to 10⁻¹⁰: 0.80.
pub const PHI5_BALL_D1: f64 = 0.4;
/// Same for `d ≥ 2`; measured 1.37.
pub const PHI5_BALL_D2: f64 = 0.6;

/// `|S̃_λ − S_λ| ≤ C ‖u‖²_{m₁} S_λ` for `(f,g) = Φ⁽³⁾∘Φ⁽⁴⁾∘Φ⁽⁵⁾(u,v)`,
/// `‖u‖_{m₁} ∈ {0.01, 0.05, 0.1}`. The sample adds real physical data and
/// every nonresonant constructor mapped to normal coordinates, on d=1
/// `n_max ∈ {64, 256}` and d=2 `n_max ∈ {20, 50}`; coherent real data is
/// the worst case. Measured 1.153.
pub const CISA_C: f64 = 2.0;

/// `|W_{≥7}(u,v)_k| ≤ C ‖u‖⁶_{m₁} (|u_k| + |u_{-k}|)` at `‖u‖_{m₁} ≤ 0.05`,
/// same widened sample as [`CISA_C`]. Measured 1.45 (d=1), 0.24 (d=2).
pub const RESIDUAL_C: f64 = 3.0;

/// `|coef(j,ℓ,k)| ≤ C |j|²|ℓ|²` over all fifth-stage families, `d = 1`,
/// radii up to 40. Measured 0.1875.
pub const COEF_BOUND_D1: f64 = 0.25;
/// `|coef(j,ℓ,k)| ≤ C (|j|⁴|ℓ|² + |j|²|ℓ|⁴)`, `d ≥ 2`, `n ≤ 400`. Measured 0.751.
pub const COEF_BOUND_D2: f64 = 1.0;
