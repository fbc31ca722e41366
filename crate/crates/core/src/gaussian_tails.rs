//! Standard normal tail numerics: Q(t), the inverse Mills ratio, inverses,
//! bivariate orthant probabilities and Sheppard's sign-disagreement formula.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quad::integrate;

/// λ(0) = √(2/π).
pub const LAMBDA_0: f64 = 0.797_884_560_802_865_4;

/// Beyond this magnitude Q saturates to 0 or 1 and the result is flagged.
pub const SATURATION: f64 = 38.0;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// A tail probability together with an underflow flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailProbability {
    pub value: f64,
    /// Set when `|t|` exceeded [`SATURATION`] and `value` was clamped to 0 or 1.
    pub underflow: bool,
}

/// Scaled complementary error function e^{x²}·erfc(x), for x ≥ 0.
pub(crate) fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 10.0 {
        return libm::erfc(x) * (x * x).exp();
    }
    // erfc(x)e^{x²}√π = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), evaluated backwards.
    let mut tail = 0.0;
    for j in (1..=120).rev() {
        tail = (j as f64 / 2.0) / (x + tail);
    }
    INV_SQRT_PI / (x + tail)
}

/// Q(t) = Pr[N(0,1) > t] with the saturation flag.
pub fn q_tail_flagged(t: f64) -> Result<TailProbability> {
    if t.is_nan() {
        return Err(domain!("Q(t) undefined for NaN"));
    }
    if t > SATURATION {
        return Ok(TailProbability { value: 0.0, underflow: true });
    }
    if t < -SATURATION {
        return Ok(TailProbability { value: 1.0, underflow: true });
    }
    Ok(TailProbability { value: 0.5 * libm::erfc(t * FRAC_1_SQRT_2), underflow: false })
}

/// Q(t) = Pr[N(0,1) > t].
pub fn q_tail(t: f64) -> Result<f64> {
    q_tail_flagged(t).map(|q| q.value)
}

/// ln Q(t), finite for every finite t (no saturation).
pub fn ln_q_tail(t: f64) -> Result<f64> {
    if t.is_nan() {
        return Err(domain!("ln Q(t) undefined for NaN"));
    }
    if t < 0.0 {
        return Ok((-0.5 * libm::erfc(-t * FRAC_1_SQRT_2)).ln_1p());
    }
    let x = t * FRAC_1_SQRT_2;
    if t < 30.0 {
        Ok((0.5 * libm::erfc(x)).ln())
    } else {
        Ok(erfcx(x).ln() - x * x - LN_2)
    }
}

/// Inverse Mills ratio λ(t) = φ(t)/Q(t) for t ≥ 0.
pub fn mills_ratio(t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(domain!("inverse Mills ratio requires t >= 0, got {t}"));
    }
    Ok(LAMBDA_0 / erfcx(t * FRAC_1_SQRT_2))
}

/// Lower and upper sandwich for λ(t):
/// max{t, λ₀²t + λ₀} ≤ λ(t) ≤ t + min{1/t, λ₀}.
pub fn mills_sandwich(t: f64) -> (f64, f64) {
    let lower = t.max(LAMBDA_0 * LAMBDA_0 * t + LAMBDA_0);
    let upper = t + if t > 0.0 { (1.0 / t).min(LAMBDA_0) } else { LAMBDA_0 };
    (lower, upper)
}

/// The t with Q(t) = p, by safeguarded Newton iteration on ln Q inside a bracket.
pub fn q_inverse(p: f64) -> Result<f64> {
    if p.is_nan() || p <= 0.0 || p >= 1.0 {
        return Err(domain!("Q^-1 requires p in (0, 1), got {p}"));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let target = p.ln();
    let g = |t: f64| ln_q_tail(t).expect("finite t") - target;
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    let mut t = 0.0;
    for _ in 0..200 {
        let gt = g(t);
        if gt == 0.0 {
            return Ok(t);
        }
        // g is decreasing in t.
        if gt > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        // g'(t) = -φ(t)/Q(t).
        let slope = if t >= 0.0 {
            mills_ratio(t).expect("t >= 0")
        } else {
            normal_pdf(t) / q_tail(t).expect("finite t")
        };
        let mut next = t + gt / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
            return Ok(next);
        }
        t = next;
    }
    Ok(t)
}

/// Bivariate normal orthant probability L(t, φ; ρ) = Pr[X > t, Y > φt] for
/// (X, Y) standard normals with correlation ρ.
pub fn orthant_probability(t: f64, phi: f64, rho: f64) -> Result<f64> {
    if rho.is_nan() || rho.abs() > 1.0 {
        return Err(domain!("correlation {rho} outside [-1, 1]"));
    }
    if t.is_nan() || phi.is_nan() || t.is_infinite() || phi.is_infinite() {
        return Err(domain!("orthant thresholds must be finite"));
    }
    let s = phi * t;
    if rho == 1.0 {
        return q_tail(t.max(s));
    }
    if rho == -1.0 {
        // Y = -X: the event is t < X < -s.
        return Ok((q_tail(t)? - q_tail(-s)?).max(0.0));
    }
    let sd = (1.0 - rho * rho).sqrt();
    let integrand = |x: f64| normal_pdf(x) * 0.5 * libm::erfc((s - rho * x) / sd * FRAC_1_SQRT_2);
    let upper = t.max(0.0) + SATURATION + 2.0;
    let mut breaks = vec![t + 1.0, t + 4.0];
    if rho != 0.0 {
        breaks.push(s / rho);
    }
    let (value, _) = integrate(integrand, t, upper, &breaks, 1e-300, 1e-14);
    Ok(value.clamp(0.0, 1.0))
}

/// Pr[sign(X) ≠ sign(Y)] = arccos(ρ)/π for a ρ-correlated normal pair.
pub fn sheppard_disagreement(rho: f64) -> Result<f64> {
    if rho.is_nan() || rho.abs() > 1.0 {
        return Err(domain!("correlation {rho} outside [-1, 1]"));
    }
    Ok(rho.acos() / PI)
}

/// Threshold bundle (t, φ, ρ, δ) with φ = ρ + δ√(1−ρ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailParams {
    pub t: f64,
    pub phi: f64,
    pub rho: f64,
    pub delta: f64,
}

impl TailParams {
    pub fn new(t: f64, rho: f64, delta: f64) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(domain!("t must be a finite nonnegative number, got {t}"));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(domain!("rho must lie in [0, 1), got {rho}"));
        }
        let max_delta = ((1.0 - rho) / (1.0 + rho)).sqrt();
        if !(delta >= 0.0) || delta > max_delta * (1.0 + 1e-12) {
            return Err(domain!("delta {delta} outside [0, {max_delta}]"));
        }
        let phi = (rho + delta * (1.0 - rho * rho).sqrt()).min(1.0);
        Ok(TailParams { t, phi, rho, delta })
    }

    /// L(t, φ; ρ) for this bundle.
    pub fn orthant(&self) -> f64 {
        orthant_probability(self.t, self.phi, self.rho).expect("validated parameters")
    }
}
