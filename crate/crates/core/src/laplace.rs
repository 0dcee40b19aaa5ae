//! Laplace transforms of busy-period areas.
//!
//! `J(x) = ∫₀^{τ(x)} (x + B(t) − ct) dt` is the area swept by the free
//! workload from level `x` until it empties; from stationarity the start
//! level is `Exp(2c)`. Both transforms are ratios of Airy functions and are
//! evaluated in log space so that the huge Airy arguments at small `γ` do
//! not underflow.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{fmt_real, QueueParams};
use crate::quadrature::{integrate, QuadOptions};
use crate::scalar::Real;
use crate::special::airy_ai_ln_ratio;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformPoint<T> {
    pub gamma: T,
    pub value: T,
}

/// Airy arguments: `z0 = (2γ)^{−2/3}c²` and the slope `(2γ)^{1/3}`.
fn airy_scaling<T: Real>(gamma: T, params: &QueueParams<T>) -> Result<(T, T)> {
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(Error::domain(format!("transform argument must be positive, got {gamma}")));
    }
    let c = params.c();
    let cube = (T::lit(2.0) * gamma).cbrt();
    Ok((c * c / (cube * cube), cube))
}

/// `E[exp(−γ J(x))] = e^{cx} Ai(z0 + (2γ)^{1/3}x) / Ai(z0)`.
///
/// `γ = 0` is rejected; its value is 1.
pub fn transient_lt<T: Real>(gamma: T, x: T, params: &QueueParams<T>) -> Result<T> {
    if !(x >= T::zero()) {
        return Err(Error::domain(format!("start level must be nonnegative, got {x}")));
    }
    let (z0, slope) = airy_scaling(gamma, params)?;
    transient_ln(x, z0, slope, params).map(|v| v.exp())
}

fn transient_ln<T: Real>(x: T, z0: T, slope: T, params: &QueueParams<T>) -> Result<T> {
    Ok(params.c() * x + airy_ai_ln_ratio(z0, slope * x)?)
}

fn quad_opts<T: Real>() -> QuadOptions<T> {
    let floor = T::epsilon() * T::lit(100.0);
    QuadOptions { abs_tol: T::lit(1e-13).max(floor), rel_tol: T::lit(1e-12).max(floor), max_subdivisions: 4000 }
}

/// Agreement required between the two stationary quadrature routes.
fn agreement_tol<T: Real>() -> T {
    T::lit(1e-8).max(T::epsilon() * T::lit(1e4))
}

/// `E[exp(−γ ∫₀^{τ₀} Q dt)]` for the residual busy period seen from
/// stationarity:
///
/// `(2c/Ai(z0)) ∫₀^∞ e^{−cx} Ai(z0 + (2γ)^{1/3}x) dx`.
///
/// The integral is truncated at the first `X` (found by doubling) where the
/// tail bound `2·e^{−cX}·Ai(z0 + (2γ)^{1/3}X)/Ai(z0)` is below `10⁻¹²`, which
/// holds because `Ai` is decreasing. As an independent check the same value
/// is computed as the exponential mixture `∫₀^∞ 2c e^{−2cx} E[e^{−γJ(x)}] dx`
/// in the variable `y = e^{−2cx}`, i.e. `∫₀¹ E[e^{−γJ(−ln y / 2c)}] dy`; a
/// disagreement beyond `10⁻⁸` is a `QuadratureFailure`.
pub fn stationary_lt<T: Real>(gamma: T, params: &QueueParams<T>) -> Result<T> {
    let (direct, mixture) = stationary_lt_routes(gamma, params)?;
    let gap = (direct - mixture).abs();
    if gap > agreement_tol() {
        return Err(Error::QuadratureFailure(format!(
            "stationary transform routes disagree at gamma={gamma}: {direct} vs {mixture}"
        )));
    }
    Ok(direct)
}

/// Both quadrature evaluations of the stationary transform: the truncated
/// `x`-integral and the mixture over `y ∈ (0, 1)`.
pub fn stationary_lt_routes<T: Real>(gamma: T, params: &QueueParams<T>) -> Result<(T, T)> {
    let (z0, slope) = airy_scaling(gamma, params)?;
    let c = params.c();
    let two = T::lit(2.0);
    let opts = quad_opts::<T>();

    let ln_tail = |x: T| -> Result<T> { Ok(two.ln() - c * x + airy_ai_ln_ratio(z0, slope * x)?) };
    let target = T::lit(1e-12).ln();
    let mut upper = T::one() / c;
    let mut doublings = 0;
    while ln_tail(upper)? > target {
        upper = upper * two;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::QuadratureFailure("truncation point not found".into()));
        }
    }
    let mut airy_err = None;
    let direct = integrate(
        |x: T| match airy_ai_ln_ratio(z0, slope * x) {
            Ok(l) => two * c * (l - c * x).exp(),
            Err(e) => {
                airy_err.get_or_insert(e);
                T::nan()
            }
        },
        T::zero(),
        upper,
        &opts,
    );
    if let Some(e) = airy_err.take() {
        return Err(e);
    }
    let direct = direct?.value;

    let mixture = integrate(
        |y: T| {
            if y <= T::zero() {
                return T::zero();
            }
            let x = -y.ln() / (two * c);
            match transient_ln(x, z0, slope, params) {
                Ok(l) => l.exp(),
                Err(e) => {
                    airy_err.get_or_insert(e);
                    T::nan()
                }
            }
        },
        T::zero(),
        T::one(),
        &opts,
    );
    if let Some(e) = airy_err {
        return Err(e);
    }
    Ok((direct, mixture?.value))
}

/// `E J(x) = x²/(2c) + x/(2c²)`.
pub fn mean_transient_area<T: Real>(x: T, params: &QueueParams<T>) -> Result<T> {
    if !(x >= T::zero()) {
        return Err(Error::domain(format!("start level must be nonnegative, got {x}")));
    }
    let c = params.c();
    Ok(x * x / (T::lit(2.0) * c) + x / (T::lit(2.0) * c * c))
}

/// `E ∫₀^{τ₀} Q dt = 1/(2c³)`.
pub fn mean_stationary_area<T: Real>(params: &QueueParams<T>) -> T {
    let c = params.c();
    T::one() / (T::lit(2.0) * c * c * c)
}

/// Point at which small-`γ` derivatives are taken.
pub const MOMENT_GAMMA: f64 = 1e-4;

/// `(−1)^order · dⁿ/dγⁿ lt` at `gamma`, by central differences with step
/// `gamma/2` and one Richardson extrapolation. Numerical only: accuracy is
/// limited by the cancellation in the differences.
pub fn numeric_moment<F>(lt: F, gamma: f64, order: u8) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(gamma > 0.0) {
        return Err(Error::domain(format!("moment point must be positive, got {gamma}")));
    }
    let diff = |h: f64| -> Result<f64> {
        match order {
            1 => Ok(-(lt(gamma + h)? - lt(gamma - h)?) / (2.0 * h)),
            2 => Ok((lt(gamma + h)? - 2.0 * lt(gamma)? + lt(gamma - h)?) / (h * h)),
            _ => Err(Error::domain(format!("moment order must be 1 or 2, got {order}"))),
        }
    };
    let h = 0.5 * gamma;
    let coarse = diff(h)?;
    let fine = diff(0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Numerical `E J(x)` from the transient transform near `γ = 0`.
pub fn numeric_mean_transient_area(x: f64, params: &QueueParams<f64>) -> Result<f64> {
    numeric_moment(|g| transient_lt(g, x, params), MOMENT_GAMMA, 1)
}

/// Numerical `E ∫₀^{τ₀} Q dt` from the stationary transform near `γ = 0`.
pub fn numeric_mean_stationary_area(params: &QueueParams<f64>) -> Result<f64> {
    numeric_moment(|g| stationary_lt(g, params), MOMENT_GAMMA, 1)
}

/// Which transform a table holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TransformKind {
    /// Busy period started at a fixed level `x`.
    Transient {
        x: f64,
    },
    Stationary,
}

/// Evaluates a transform on a grid of `γ`; `γ = 0` maps to 1.
pub fn transform_table(
    kind: TransformKind,
    gammas: &[f64],
    params: &QueueParams<f64>,
) -> Result<Vec<TransformPoint<f64>>> {
    gammas
        .iter()
        .map(|&gamma| {
            let value = if gamma == 0.0 {
                1.0
            } else {
                match kind {
                    TransformKind::Transient { x } => transient_lt(gamma, x, params)?,
                    TransformKind::Stationary => stationary_lt(gamma, params)?,
                }
            };
            Ok(TransformPoint { gamma, value })
        })
        .collect()
}

/// Writes `gamma,lt` rows.
pub fn write_transform_csv<W: Write>(points: &[TransformPoint<f64>], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["gamma", "lt"])?;
    for p in points {
        wtr.write_record([fmt_real(p.gamma), fmt_real(p.value)])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: f64) -> QueueParams<f64> {
        QueueParams::new(c).unwrap()
    }

    #[test]
    fn transient_at_zero_start_is_one() {
        for g in [1e-3, 0.5, 7.0] {
            assert!((transient_lt(g, 0.0, &p(1.3)).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(transient_lt(0.0, 1.0, &p(1.0)), Err(Error::Domain(_))));
        assert!(transient_lt(-1.0, 1.0, &p(1.0)).is_err());
        assert!(transient_lt(1.0, -1.0, &p(1.0)).is_err());
        assert!(stationary_lt(0.0, &p(1.0)).is_err());
        assert!(mean_transient_area(-1.0, &p(1.0)).is_err());
    }

    #[test]
    fn closed_form_means() {
        assert_eq!(mean_transient_area(0.0, &p(1.0)).unwrap(), 0.0);
        assert_eq!(mean_transient_area(1.0, &p(1.0)).unwrap(), 1.0);
        assert_eq!(mean_transient_area(1.0, &p(2.0)).unwrap(), 0.375);
        assert_eq!(mean_stationary_area(&p(1.0)), 0.5);
        assert_eq!(mean_stationary_area(&p(2.0)), 1.0 / 16.0);
    }

    #[test]
    fn mixture_of_transient_means() {
        let params = p(1.0);
        let q = integrate(
            |x: f64| 2.0 * (-2.0 * x).exp() * mean_transient_area(x, &params).unwrap(),
            0.0,
            60.0,
            &QuadOptions::default(),
        )
        .unwrap();
        assert!((q.value - 0.5).abs() < 1e-10);
    }

    #[test]
    fn transient_slope_matches_mean() {
        let params = p(1.0);
        let g = 1e-4;
        let slope =
            (transient_lt(g + 1e-6, 1.0, &params).unwrap() - transient_lt(g - 1e-6, 1.0, &params).unwrap()) / 2e-6;
        assert!((-slope - 1.0).abs() < 0.01, "{slope}");
        let m = numeric_mean_transient_area(1.0, &params).unwrap();
        assert!((m - 1.0).abs() < 1e-3, "{m}");
        let m = numeric_mean_transient_area(2.0, &p(0.7)).unwrap();
        let exact = mean_transient_area(2.0, &p(0.7)).unwrap();
        assert!((m - exact).abs() < 2e-3 * exact, "{m} vs {exact}");
    }

    #[test]
    fn stationary_small_gamma() {
        let params = p(1.0);
        let v = stationary_lt(1e-6, &params).unwrap();
        assert!((v - 1.0).abs() < 1e-3);
        let g = 1e-4;
        let slope = -(stationary_lt(g, &params).unwrap() - 1.0) / g;
        assert!((slope - 0.5).abs() < 0.005, "{slope}");
        let m = numeric_mean_stationary_area(&params).unwrap();
        assert!((m - 0.5).abs() < 1e-3, "{m}");
    }

    #[test]
    fn routes_agree() {
        for c in [0.5, 1.0, 2.0] {
            for g in [0.01, 0.1, 1.0, 10.0] {
                let (a, b) = stationary_lt_routes(g, &p(c)).unwrap();
                assert!((a - b).abs() <= 1e-8, "c={c} g={g}: {a} vs {b}");
                assert!(a > 0.0 && a < 1.0);
            }
        }
    }

    #[test]
    fn monotone_and_convex_in_gamma() {
        let params = p(1.0);
        let gammas: Vec<f64> = (0..=25).map(|k| 10f64.powf(-3.0 + 5.0 * k as f64 / 25.0)).collect();
        let st: Vec<f64> = gammas.iter().map(|&g| stationary_lt(g, &params).unwrap()).collect();
        let tr: Vec<f64> = gammas.iter().map(|&g| transient_lt(g, 1.0, &params).unwrap()).collect();
        for v in [&st, &tr] {
            assert!(v.iter().all(|&x| x > 0.0 && x < 1.0));
            assert!(v.windows(2).all(|w| w[1] < w[0]));
        }
        // convexity on a uniform grid
        let lin: Vec<f64> = (0..=40).map(|k| 0.01 + 0.05 * k as f64).collect();
        let vals: Vec<f64> = lin.iter().map(|&g| stationary_lt(g, &params).unwrap()).collect();
        assert!(vals.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] > 0.0));
    }

    #[test]
    fn decreasing_in_start_level() {
        let params = p(1.0);
        let v: Vec<f64> = (0..40).map(|k| transient_lt(0.5, 0.1 * k as f64, &params).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn asymptotic_expansion_route_to_the_mean() {
        // replacing Ai by its two-term expansion reproduces E J(x) at small γ
        let ln_two_term = |u: f64| -(2.0 / 3.0) * u.powf(1.5) - 0.25 * u.ln() + (1.0 - 5.0 / 48.0 * u.powf(-1.5)).ln();
        let params = p(1.0);
        let g = 1e-4;
        for x in [0.5, 1.0, 2.0] {
            let (z0, slope) = airy_scaling(g, &params).unwrap();
            let ln_lt = x * params.c() + ln_two_term(z0 + slope * x) - ln_two_term(z0);
            let mean = -ln_lt.exp_m1() / g;
            let exact = mean_transient_area(x, &params).unwrap();
            assert!((mean - exact).abs() < 0.01 * exact, "x={x}: {mean} vs {exact}");
        }
    }

    #[test]
    fn numeric_second_moment_of_known_transform() {
        // Exp(1): E X² = 2
        let m2 = numeric_moment(|g| Ok(1.0 / (1.0 + g)), 1e-3, 2).unwrap();
        assert!((m2 - 2.0).abs() < 1e-2, "{m2}");
        assert!(numeric_moment(Ok, 1e-3, 3).is_err());
    }

    #[test]
    fn table_and_csv() {
        let params = p(1.0);
        let pts = transform_table(TransformKind::Stationary, &[0.0, 0.1, 1.0], &params).unwrap();
        assert_eq!(pts[0].value, 1.0);
        let mut buf = Vec::new();
        write_transform_csv(&pts, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("gamma,lt\n"));
        assert_eq!(s.lines().count(), 4);
        let t = transform_table(TransformKind::Transient { x: 1.0 }, &[1.0], &params).unwrap();
        assert!(t[0].value < 1.0);
    }

    #[test]
    fn f32_transient() {
        let params = QueueParams::new(1.0f32).unwrap();
        let v = transient_lt(1.0f32, 1.0, &params).unwrap();
        let w = transient_lt(1.0f64, 1.0, &p(1.0)).unwrap();
        assert!((v as f64 - w).abs() < 1e-4);
    }
}
