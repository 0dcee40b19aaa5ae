//! Airy function `Ai` on the nonnegative half-line.
//!
//! Three regions, each used where it is accurate to better than `1e-10`
//! relative in `f64`:
//!
//! * `x <= AIRY_SERIES_MAX`: Maclaurin series `Ai = c₁f(x) − c₂g(x)` with the
//!   two sub-series generated by their coefficient recurrences. The
//!   subtraction cancels badly for larger `x`, which is why the series stops
//!   early.
//! * `AIRY_SERIES_MAX < x < AIRY_ASYMPTOTIC_MIN`: the steepest-descent
//!   integral `Ai(x) = e^{−ζ}/π ∫₀^∞ exp(−√x t²) cos(t³/3) dt`,
//!   `ζ = (2/3)x^{3/2}`, by adaptive Gauss–Kronrod. The integrand is
//!   positive where it matters, so there is no cancellation.
//! * `x >= AIRY_ASYMPTOTIC_MIN`: the large-argument expansion
//!   `e^{−ζ}/(2√π x^{1/4}) Σ (−1)^k u_k ζ^{−k}` truncated at its smallest
//!   term.
//!
//! [`airy_ai_ln`] returns `ln Ai(x)` without forming `Ai(x)`, so arguments
//! in the thousands (where `Ai` underflows) remain usable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};
use crate::scalar::Real;

/// Upper end of the power-series region.
pub const AIRY_SERIES_MAX: f64 = 2.0;
/// Lower end of the asymptotic region (`x_switch`).
pub const AIRY_ASYMPTOTIC_MIN: f64 = 7.0;

/// `Ai(0) = 3^{−2/3}/Γ(2/3)`.
const AI0: f64 = 0.355_028_053_887_817_239_260_063_186_004;
/// `−Ai′(0) = 3^{−1/3}/Γ(1/3)`.
const AIP0: f64 = 0.258_819_403_792_806_798_405_183_560_189;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AiryMethod {
    PowerSeries,
    Quadrature,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AiryValue<T> {
    pub x: T,
    pub ai: T,
    pub method: AiryMethod,
}

/// Which region evaluates `x`.
pub fn airy_method<T: Real>(x: T) -> AiryMethod {
    if x <= T::lit(AIRY_SERIES_MAX) {
        AiryMethod::PowerSeries
    } else if x < T::lit(AIRY_ASYMPTOTIC_MIN) {
        AiryMethod::Quadrature
    } else {
        AiryMethod::Asymptotic
    }
}

fn check_domain<T: Real>(x: T) -> Result<()> {
    if x >= T::zero() && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("Airy Ai is evaluated for finite x >= 0 only, got {x}")))
    }
}

/// `Ai(x)` for `x >= 0`.
pub fn airy_ai<T: Real>(x: T) -> Result<T> {
    Ok(airy_ai_value(x)?.ai)
}

pub fn airy_ai_value<T: Real>(x: T) -> Result<AiryValue<T>> {
    check_domain(x)?;
    let method = airy_method(x);
    let ai = match method {
        AiryMethod::PowerSeries => series(x),
        AiryMethod::Quadrature => steepest_descent(x)?.exp(),
        AiryMethod::Asymptotic => asymptotic_ln(x).exp(),
    };
    Ok(AiryValue { x, ai, method })
}

/// `ln Ai(x)` for `x >= 0`.
pub fn airy_ai_ln<T: Real>(x: T) -> Result<T> {
    check_domain(x)?;
    Ok(match airy_method(x) {
        AiryMethod::PowerSeries => series(x).ln(),
        AiryMethod::Quadrature => steepest_descent(x)?,
        AiryMethod::Asymptotic => asymptotic_ln(x),
    })
}

fn series<T: Real>(x: T) -> T {
    let x3 = x * x * x;
    let eps = T::epsilon() * T::lit(0.25);
    let mut f_term = T::one();
    let mut g_term = x;
    let mut f = f_term;
    let mut g = g_term;
    let mut k = 1usize;
    loop {
        let kk = T::from_usize_lossy(3 * k);
        f_term = f_term * x3 / ((kk - T::one()) * kk);
        g_term = g_term * x3 / (kk * (kk + T::one()));
        f = f + f_term;
        g = g + g_term;
        if f_term <= eps * f && g_term <= eps * g.max(T::min_positive_value()) {
            break;
        }
        k += 1;
        if k > 200 {
            break;
        }
    }
    T::lit(AI0) * f - T::lit(AIP0) * g
}

/// `ln Ai(x)` from the steepest-descent integral.
fn steepest_descent<T: Real>(x: T) -> Result<T> {
    let sx = x.sqrt();
    // exp(−√x t²) < 1e−18 beyond t_max
    let t_max = (T::lit(41.5) / sx).sqrt();
    let opts = QuadOptions { abs_tol: T::zero(), rel_tol: T::epsilon() * T::lit(16.0), max_subdivisions: 500 };
    let r = integrate(|t: T| (-sx * t * t).exp() * (t * t * t / T::lit(3.0)).cos(), T::zero(), t_max, &opts)?;
    let zeta = T::lit(2.0) / T::lit(3.0) * x * sx;
    Ok(-zeta - T::PI().ln() + r.value.ln())
}

fn asymptotic_ln<T: Real>(x: T) -> T {
    let zeta = T::lit(2.0) / T::lit(3.0) * x * x.sqrt();
    -zeta - (T::lit(2.0) * T::PI().sqrt() * x.sqrt().sqrt()).ln() + asymptotic_sum(zeta).ln()
}

/// `Σ (−1)^k u_k ζ^{−k}` truncated at its smallest term.
fn asymptotic_sum<T: Real>(zeta: T) -> T {
    let mut sum = T::one();
    let mut u = T::one();
    let mut prev_term = T::infinity();
    let mut sign = -T::one();
    for k in 1..60usize {
        let kf = T::from_usize_lossy(k);
        let six_k = T::lit(6.0) * kf;
        u = u * (six_k - T::lit(5.0)) * (six_k - T::lit(3.0)) * (six_k - T::one())
            / ((T::lit(2.0) * kf - T::one()) * T::lit(216.0) * kf);
        let term = u / zeta.powi(k as i32);
        if term >= prev_term || term < T::epsilon() * T::lit(0.25) {
            break;
        }
        sum = sum + sign * term;
        sign = -sign;
        prev_term = term;
    }
    sum
}

/// `ln Ai(x + d) − ln Ai(x)` for `x, d >= 0`.
///
/// For large `x` both logarithms are dominated by `(2/3)x^{3/2}` and their
/// plain difference loses most digits; there the difference of the
/// exponents is formed directly as `(2/3)x^{3/2}·((1 + d/x)^{3/2} − 1)`.
pub fn airy_ai_ln_ratio<T: Real>(x: T, d: T) -> Result<T> {
    check_domain(x)?;
    check_domain(d)?;
    if x < T::lit(AIRY_ASYMPTOTIC_MIN) {
        return Ok(airy_ai_ln(x + d)? - airy_ai_ln(x)?);
    }
    let rel = (d / x).ln_1p();
    let zeta0 = T::lit(2.0) / T::lit(3.0) * x * x.sqrt();
    let dzeta = zeta0 * (T::lit(1.5) * rel).exp_m1();
    let zeta1 = zeta0 + dzeta;
    Ok(-dzeta - T::lit(0.25) * rel + (asymptotic_sum(zeta1) / asymptotic_sum(zeta0)).ln())
}

/// Leading-order large-argument form
/// `Ai(u) ≈ 1/(2√π u^{1/4}) · exp(−(2/3)u^{3/2}) · (1 − (5/48)u^{−3/2})`,
/// the bracket included only for `order >= 1`.
pub fn airy_ai_asymptotic<T: Real>(u: T, order: u8) -> Result<T> {
    if !(u > T::zero()) || !u.is_finite() {
        return Err(Error::domain(format!("asymptotic form needs u > 0, got {u}")));
    }
    if order > 1 {
        return Err(Error::domain(format!("order must be 0 or 1, got {order}")));
    }
    let lead = (-(T::lit(2.0) / T::lit(3.0)) * u.powf(T::lit(1.5))).exp()
        / (T::lit(2.0) * T::PI().sqrt() * u.powf(T::lit(0.25)));
    Ok(if order == 1 { lead * (T::one() - T::lit(5.0 / 48.0) * u.powf(T::lit(-1.5))) } else { lead })
}

/// Reference oracle straight from the oscillatory definition
/// `Ai(x) = (1/π)∫₀^∞ cos(t³/3 + xt) dt`, with the ray rotated to
/// `t = r·e^{iπ/6}` so the integrand decays like `exp(−r³/3)`:
/// `Ai(x) = (1/π) Re[e^{iπ/6} ∫₀^∞ exp(−r³/3 − xr/2) e^{i·xr√3/2} dr]`.
/// Composite Simpson on `[0, 12]` with 60 000 panels. Verification only.
pub fn airy_cosine_oracle(x: f64) -> f64 {
    let n = 60_000usize;
    let (a, b) = (0.0f64, 12.0f64);
    let h = (b - a) / n as f64;
    let (ca, sa) = ((std::f64::consts::PI / 6.0).cos(), (std::f64::consts::PI / 6.0).sin());
    let re = |r: f64| {
        let mag = (-r * r * r / 3.0 - 0.5 * x * r).exp();
        let ph = 0.5 * 3f64.sqrt() * x * r;
        // Re[(ca + i sa)(cos ph + i sin ph)]
        mag * (ca * ph.cos() - sa * ph.sin())
    };
    let mut s = re(a) + re(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * re(a + k as f64 * h);
    }
    s * h / 3.0 / std::f64::consts::PI
}
