//! Closed-form tail asymptotics and rate functions for the area under the
//! stationary workload.
//!
//! Three timescales are covered. For horizons `T(u) = o(√u)` the area tail
//! has exact asymptotics [`theorem1_asymptotic`]; its non-asymptotic
//! counterpart for the unreflected process is
//! [`lemma1_exact_probability`]. For `T(u) = T√u` the logarithmic decay
//! rate is the piecewise [`phi_tm`], obtained by minimizing [`psi`] over the
//! start level `a` and busy duration `s`. For longer horizons the rate
//! collapses to [`phi_m`].

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::{fmt_real, Branch, QueueParams, RateResult};
use crate::scalar::Real;

/// Area threshold and horizon for the short-timescale formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortTimescaleInput<T> {
    pub u: T,
    pub horizon: T,
    pub params: QueueParams<T>,
}

impl<T: Real> ShortTimescaleInput<T> {
    pub fn new(u: T, horizon: T, params: QueueParams<T>) -> Result<Self> {
        if !(u > T::zero()) || !(horizon > T::zero()) {
            return Err(Error::domain(format!("need u > 0 and T > 0, got u={u}, T={horizon}")));
        }
        Ok(Self { u, horizon, params })
    }

    pub fn theorem1(&self) -> T {
        theorem1_asymptotic(self.u, self.horizon, &self.params)
    }

    pub fn lemma1(&self) -> T {
        lemma1_exact_probability(self.u, self.horizon, &self.params)
    }
}

/// `exp(−2cu/T − c²T/3)`.
pub fn theorem1_asymptotic<T: Real>(u: T, horizon: T, params: &QueueParams<T>) -> T {
    theorem1_exponent(u, horizon, params).exp()
}

/// The (negative) exponent of [`theorem1_asymptotic`].
pub fn theorem1_exponent<T: Real>(u: T, horizon: T, params: &QueueParams<T>) -> T {
    let c = params.c();
    -T::lit(2.0) * c * u / horizon - c * c * horizon / T::lit(3.0)
}

/// `P(T·Q(0) + T^{3/2}/√3 · N > u + cT²/2)` with `Q(0) ~ Exp(2c)` and `N`
/// standard normal, i.e. the probability that the area of the unreflected
/// process `Q(0) + B(r) − cr` over `[0, T]` exceeds `u`.
///
/// Conditioning on `N` splits the event where the exponential tail applies
/// (`N < A₁`) from the one where it is certain (`N ≥ A₁`):
/// `I₁ = exp(−2cu/T − c²T/3)·Φ(A₁ − 2c√(T/3))` and `I₂ = 1 − Φ(A₁)` with
/// `A₁ = √3(u + cT²/2)/T^{3/2}`. Completing the square in `I₁` shifts the
/// normal mean to `+2c√(T/3)`, hence the minus sign.
pub fn lemma1_exact_probability<T: Real>(u: T, horizon: T, params: &QueueParams<T>) -> T {
    let c = params.c();
    let three = T::lit(3.0);
    let a1 = three.sqrt() * (u + T::lit(0.5) * c * horizon * horizon) / horizon.powf(T::lit(1.5));
    let shift = T::lit(2.0) * c * (horizon / three).sqrt();
    let i1 = if a1 - shift > -T::lit(40.0) {
        // log-space product: the exponent can be large and positive when u < 0
        (theorem1_exponent(u, horizon, params) + (a1 - shift).norm_cdf().ln()).exp()
    } else {
        T::zero()
    };
    let i2 = a1.norm_sf();
    (i1 + i2).min(T::one())
}

/// [`lemma1_exact_probability`] over [`theorem1_asymptotic`] (`θ`) minus
/// one, formed as `I₂/θ − Φ̄(A₁ − 2c√(T/3))`. The gap falls below `f64`
/// resolution of the plain ratio already at moderate `u`.
pub fn lemma1_ratio_gap<T: Real>(u: T, horizon: T, params: &QueueParams<T>) -> T {
    let c = params.c();
    let three = T::lit(3.0);
    let a1 = three.sqrt() * (u + T::lit(0.5) * c * horizon * horizon) / horizon.powf(T::lit(1.5));
    let shift = T::lit(2.0) * c * (horizon / three).sqrt();
    let sf = a1.norm_sf();
    let tail = if sf > T::zero() { (sf.ln() - theorem1_exponent(u, horizon, params)).exp() } else { T::zero() };
    tail - (a1 - shift).norm_sf()
}

/// `√(6M/c)`: the busy-period duration that minimizes the unconstrained cost.
pub fn free_duration<T: Real>(m: T, params: &QueueParams<T>) -> T {
    (T::lit(6.0) * m / params.c()).sqrt()
}

/// The intermediate-timescale decay rate `φ(T, M)` with its optimizer.
///
/// Interior when `√(6M/c) < T`; the branch point itself is tagged Boundary
/// (both formulas agree there).
pub fn phi_tm<T: Real>(horizon: T, m: T, params: &QueueParams<T>) -> RateResult<T> {
    let c = params.c();
    let s_free = free_duration(m, params);
    if s_free < horizon {
        RateResult { value: phi_m(m, params), a_star: T::zero(), s_star: s_free, branch: Branch::Interior }
    } else {
        RateResult {
            value: T::lit(2.0) * c * m / horizon + c * c * horizon / T::lit(3.0),
            a_star: m / horizon - c * horizon / T::lit(6.0),
            s_star: horizon,
            branch: Branch::Boundary,
        }
    }
}

/// `ψ(M, a, s) = (M + cs²/2 − as)² / ((2/3)s³) + 2ac`.
pub fn psi<T: Real>(m: T, a: T, s: T, params: &QueueParams<T>) -> Result<T> {
    if !(s > T::zero()) {
        return Err(Error::domain(format!("psi needs s > 0, got {s}")));
    }
    Ok(psi_unchecked(m, a, s, params))
}

#[inline]
pub(crate) fn psi_unchecked<T: Real>(m: T, a: T, s: T, params: &QueueParams<T>) -> T {
    excursion_cost(m, a, s, params) + T::lit(2.0) * a * params.c()
}

/// Cost of an excursion from level `a` sweeping area `M` in time `s`:
/// `(M + cs²/2 − as)² / ((2/3)s³)`.
#[inline]
fn excursion_cost<T: Real>(m: T, a: T, s: T, params: &QueueParams<T>) -> T {
    let num = m + T::lit(0.5) * params.c() * s * s - a * s;
    num * num / (T::lit(2.0) / T::lit(3.0) * s * s * s)
}

/// Closed-form minimizer of `ψ` over `a ≥ 0`, `s ∈ (0, T]`.
///
/// Same contract as [`phi_tm`], but the value is obtained by evaluating `ψ`
/// at the optimizer rather than from the rate formula.
pub fn minimize_psi_closed_form<T: Real>(horizon: T, m: T, params: &QueueParams<T>) -> RateResult<T> {
    let c = params.c();
    let s_free = free_duration(m, params);
    let (a_star, s_star, branch) = if s_free < horizon {
        (T::zero(), s_free, Branch::Interior)
    } else {
        (m / horizon - c * horizon / T::lit(6.0), horizon, Branch::Boundary)
    };
    RateResult { value: psi_unchecked(m, a_star, s_star, params), a_star, s_star, branch }
}

/// Long-timescale rate `φ(M) = (2/3)√6·c·√(cM)`.
pub fn phi_m<T: Real>(m: T, params: &QueueParams<T>) -> T {
    let c = params.c();
    T::lit(2.0) * c * (T::lit(6.0) * c * m).sqrt() / T::lit(3.0)
}

/// `ψ̃(M, δ, s) = (M + cs²/2 − δs)² / ((2/3)s³)`.
pub fn psi_tilde<T: Real>(m: T, delta: T, s: T, params: &QueueParams<T>) -> T {
    excursion_cost(m, delta, s, params)
}

/// Minimizer `s*(δ) = (−δ + √(δ² + 6Mc))/c` of `ψ̃(M, δ, ·)` over `s > 0`
/// and the minimal value.
pub fn psi_tilde_minimizer<T: Real>(m: T, delta: T, params: &QueueParams<T>) -> Result<(T, T)> {
    if !(m > T::zero()) || delta < T::zero() {
        return Err(Error::domain(format!("need M > 0 and delta >= 0, got M={m}, delta={delta}")));
    }
    let c = params.c();
    let s = (-delta + (delta * delta + T::lit(6.0) * m * c).sqrt()) / c;
    Ok((s, psi_tilde(m, delta, s, params)))
}

/// Whether densities evaluated at `t <= 0` are an error or zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DensityDomain {
    #[default]
    Strict,
    Extended,
}

/// Density of the first passage from `δ` to `0` of `δ + B(t) − ct`:
/// `δ/√(2πt³) · exp(−(δ − ct)²/(2t))`.
pub fn xi_density<T: Real>(t: T, delta: T, params: &QueueParams<T>) -> Result<T> {
    xi_density_with(t, delta, params, DensityDomain::Strict)
}

pub fn xi_density_with<T: Real>(t: T, delta: T, params: &QueueParams<T>, domain: DensityDomain) -> Result<T> {
    if !(delta > T::zero()) {
        return Err(Error::domain(format!("delta must be positive, got {delta}")));
    }
    if !(t > T::zero()) {
        return match domain {
            DensityDomain::Extended => Ok(T::zero()),
            DensityDomain::Strict => Err(Error::domain(format!("density needs t > 0, got {t}"))),
        };
    }
    let c = params.c();
    let z = delta - c * t;
    let log_pref = delta.ln() - T::lit(0.5) * (T::lit(2.0) * T::PI()).ln() - T::lit(1.5) * t.ln();
    Ok((log_pref - z * z / (T::lit(2.0) * t)).exp())
}

/// Row kinds accepted by [`evaluate_batch_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchKind {
    /// Columns `u,T`; appends `theorem1,lemma1`.
    ShortTimescale,
    /// Columns `T,M`; appends `phi,branch,a_star,s_star`.
    Rate,
}

/// Reads a CSV of `(u, T)` or `(T, M)` rows (kind picked from the header)
/// and writes it back with the evaluated columns appended.
pub fn evaluate_batch_csv<R: Read, W: Write>(input: R, output: W, params: &QueueParams<f64>) -> Result<BatchKind> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let kind = match names.as_slice() {
        ["u", "T", ..] => BatchKind::ShortTimescale,
        ["T", "M", ..] => BatchKind::Rate,
        _ => {
            return Err(Error::InvalidConfig(format!("batch CSV header must start with `u,T` or `T,M`, got {names:?}")))
        }
    };
    let mut wtr = csv::Writer::from_writer(output);
    let mut out_header: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    match kind {
        BatchKind::ShortTimescale => out_header.extend(["theorem1".into(), "lemma1".into()]),
        BatchKind::Rate => out_header.extend(["phi".into(), "branch".into(), "a_star".into(), "s_star".into()]),
    }
    wtr.write_record(&out_header)?;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidConfig(format!("row {}: column {} is not a number", row + 1, i)))
        };
        let (x, y) = (num(0)?, num(1)?);
        if !(x > 0.0) || !(y > 0.0) {
            return Err(Error::domain(format!("row {}: values must be positive", row + 1)));
        }
        let mut out: Vec<String> = rec.iter().map(str::to_string).collect();
        match kind {
            BatchKind::ShortTimescale => {
                out.push(fmt_real(theorem1_asymptotic(x, y, params)));
                out.push(fmt_real(lemma1_exact_probability(x, y, params)));
            }
            BatchKind::Rate => {
                let r = phi_tm(x, y, params);
                out.push(fmt_real(r.value));
                out.push(format!("{:?}", r.branch));
                out.push(fmt_real(r.a_star));
                out.push(fmt_real(r.s_star));
            }
        }
        wtr.write_record(&out)?;
    }
    wtr.flush()?;
    Ok(kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, QuadOptions};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn ratio_gap_oracle() {
        // 80-digit reference values of the ratio gap at T = u^0.3
        let p = QueueParams::new(1.0).unwrap();
        for (u, want) in [(10.0f64, -1.021368781e-9), (20.0, -1.099670039e-18), (40.0, -5.780031277e-38)] {
            let got = lemma1_ratio_gap(u, u.powf(0.3), &p);
            assert!((got - want).abs() <= 1e-6 * want.abs(), "u={u}: {got} vs {want}");
        }
        let t = 1.5;
        let plain = lemma1_exact_probability(2.0, t, &p) / theorem1_asymptotic(2.0, t, &p) - 1.0;
        assert_relative_eq!(lemma1_ratio_gap(2.0, t, &p), plain, max_relative = 1e-9);
    }

    fn p(c: f64) -> QueueParams<f64> {
        QueueParams::new(c).unwrap()
    }

    #[test]
    fn theorem1_examples() {
        let v = theorem1_asymptotic(4.0, 4f64.powf(1.0 / 3.0), &p(1.0));
        // 8/4^{1/3} + 4^{1/3}/3 = 5.56885...
        assert_relative_eq!(v.ln(), -(8.0 / 4f64.cbrt() + 4f64.cbrt() / 3.0), max_relative = 1e-14);
        assert!((v - 3.81e-3).abs() < 0.005e-3);
        assert_relative_eq!(theorem1_asymptotic(0.0, 1.0, &p(1.0)), (-1.0f64 / 3.0).exp(), max_relative = 1e-15);
        assert_relative_eq!(theorem1_asymptotic(1.0, 1.0, &p(2.0)), (-16.0f64 / 3.0).exp(), max_relative = 1e-14);
    }

    #[test]
    fn lemma1_ratio_tends_to_one_monotonically() {
        let params = p(1.0);
        let ratios: Vec<f64> = [10.0, 20.0, 40.0]
            .iter()
            .map(|&u| lemma1_exact_probability(u, 1.0, &params) / theorem1_asymptotic(u, 1.0, &params))
            .collect();
        for w in ratios.windows(2) {
            assert!((w[1] - 1.0).abs() <= (w[0] - 1.0).abs(), "{ratios:?}");
        }
        assert!((ratios[2] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn lemma1_at_gaussian_mean_is_at_least_half() {
        let params = p(1.0);
        assert!(lemma1_exact_probability(-0.5, 1.0, &params) >= 0.5);
    }

    #[test]
    fn lemma1_matches_direct_quadrature() {
        // independent route: integrate P(Q0 > z(x)) against the normal density
        let params = p(1.0);
        for &(u, t) in &[(0.5f64, 1.0f64), (3.0, 2.0), (0.1, 0.3)] {
            let f = |x: f64| {
                let z = u / t + 0.5 * t - (t / 3.0).sqrt() * x;
                let tail = if z <= 0.0 { 1.0 } else { (-2.0 * z).exp() };
                tail * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
            };
            let kink = (3.0f64).sqrt() * (u + 0.5 * t * t) / t.powf(1.5);
            let opts = QuadOptions { abs_tol: 1e-15, rel_tol: 1e-13, max_subdivisions: 4000 };
            let q = integrate(f, -40.0, kink, &opts).unwrap().value + integrate(f, kink, 40.0, &opts).unwrap().value;
            assert_relative_eq!(lemma1_exact_probability(u, t, &params), q, max_relative = 1e-11);
        }
    }

    #[test]
    fn phi_tm_examples() {
        let params = p(1.0);
        let r = phi_tm(7.0, 6.0, &params);
        assert_eq!(r.branch, Branch::Interior);
        assert_relative_eq!(r.value, 4.0, max_relative = 1e-15);
        assert_relative_eq!(r.s_star, 6.0, max_relative = 1e-15);
        assert_eq!(r.a_star, 0.0);

        let r = phi_tm(3.0, 6.0, &params);
        assert_eq!(r.branch, Branch::Boundary);
        assert_relative_eq!(r.value, 5.0, max_relative = 1e-15);
        assert_eq!(r.s_star, 3.0);
        // M/T − cT/6 = 2 − 1/2
        assert_relative_eq!(r.a_star, 1.5, max_relative = 1e-15);

        let r = phi_tm(6.0, 6.0, &params);
        assert_eq!(r.branch, Branch::Boundary);
        assert_relative_eq!(r.value, 4.0, max_relative = 1e-15);
        assert_relative_eq!(phi_m(6.0, &params), 4.0, max_relative = 1e-15);
    }

    #[test]
    fn closed_form_minimizer_agrees_with_rate() {
        let params = p(1.0);
        for &t in &[7.0, 3.0, 6.0] {
            let a = phi_tm(t, 6.0, &params);
            let b = minimize_psi_closed_form(t, 6.0, &params);
            assert_eq!(a.branch, b.branch);
            assert_eq!(a.s_star, b.s_star);
            assert_eq!(a.a_star, b.a_star);
            assert_relative_eq!(a.value, b.value, max_relative = 1e-14);
        }
    }

    #[test]
    fn psi_examples() {
        let params = p(1.0);
        let s = 6f64.sqrt();
        assert_relative_eq!(psi(1.0, 0.0, s, &params).unwrap(), 2.0 * s / 3.0, max_relative = 1e-14);
        assert_relative_eq!(psi(1.0, 1.0, 1.0, &params).unwrap(), 2.375, max_relative = 1e-15);
        assert!(psi(1.0, 0.0, 1e-30, &params).unwrap() > 1e80);
        assert!(psi(1.0, 0.0, 0.0, &params).is_err());
        assert!(psi(1.0, 0.0, -1.0, &params).is_err());
    }

    #[test]
    fn phi_m_examples() {
        let params = p(1.0);
        assert_relative_eq!(phi_m(1.0, &params), 2.0 * 6f64.sqrt() / 3.0, max_relative = 1e-15);
        assert_relative_eq!(phi_m(4.0, &params), 2.0 * phi_m(1.0, &params), max_relative = 1e-15);
    }

    #[test]
    fn psi_tilde_examples() {
        let params = p(1.0);
        let (s, v) = psi_tilde_minimizer(1.0, 0.0, &params).unwrap();
        assert_relative_eq!(s, 6f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(v, phi_m(1.0, &params), max_relative = 1e-14);
        let (s, v) = psi_tilde_minimizer(1.0, 1.0, &params).unwrap();
        assert_relative_eq!(s, 7f64.sqrt() - 1.0, max_relative = 1e-15);
        // brute-force grid oracle
        let grid_min =
            (1..=1000).map(|k| psi_tilde(1.0, 1.0, 5.0 * k as f64 / 1000.0, &params)).fold(f64::INFINITY, f64::min);
        assert!(v <= grid_min);
        assert!(grid_min - v < 1e-4);
        assert!(psi_tilde_minimizer(1.0, -0.1, &params).is_err());
    }

    #[test]
    fn psi_tilde_limit_as_delta_vanishes() {
        let params = p(1.3);
        let target = phi_m(0.7, &params);
        let mut prev = f64::INFINITY;
        for &d in &[0.1, 0.01, 0.001, 1e-5] {
            let (_, v) = psi_tilde_minimizer(0.7, d, &params).unwrap();
            let gap = (v - target).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn xi_density_moments_by_quadrature() {
        let params = p(1.0);
        let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 1e-13, max_subdivisions: 4000 };
        let f = |t: f64| xi_density_with(t, 1.0, &params, DensityDomain::Extended).unwrap();
        let mass = integrate(f, 0.0, 10.0, &opts).unwrap().value + integrate(f, 10.0, 200.0, &opts).unwrap().value;
        assert!((mass - 1.0).abs() < 1e-8, "mass {mass}");
        let g = |t: f64| t * f(t);
        let mean = integrate(g, 0.0, 10.0, &opts).unwrap().value + integrate(g, 10.0, 200.0, &opts).unwrap().value;
        assert!((mean - 1.0).abs() < 1e-6, "mean {mean}");
    }

    #[test]
    fn xi_density_domain_handling() {
        let params = p(1.0);
        assert!(xi_density(1e-4, 1.0, &params).unwrap() < 1e-300);
        assert!(matches!(xi_density(0.0, 1.0, &params), Err(Error::Domain(_))));
        assert_eq!(xi_density_with(-1.0, 1.0, &params, DensityDomain::Extended).unwrap(), 0.0);
    }

    #[test]
    fn batch_csv_both_kinds() {
        let params = p(1.0);
        let mut out = Vec::new();
        let kind = evaluate_batch_csv("T,M\n7,6\n3,6\n".as_bytes(), &mut out, &params).unwrap();
        assert_eq!(kind, BatchKind::Rate);
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("T,M,phi,branch,a_star,s_star\n7,6,4,Interior,0,6"), "{text}");
        assert!(text.contains("3,6,5,Boundary,1.5,3"));

        let mut out = Vec::new();
        let kind = evaluate_batch_csv("u,T\n1,1\n".as_bytes(), &mut out, &p(2.0)).unwrap();
        assert_eq!(kind, BatchKind::ShortTimescale);
        assert!(String::from_utf8(out).unwrap().starts_with("u,T,theorem1,lemma1\n1,1,"));
        assert!(evaluate_batch_csv("a,b\n1,1\n".as_bytes(), Vec::new(), &params).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let params = QueueParams::new(1.0f32).unwrap();
        let r = phi_tm(7.0f32, 6.0, &params);
        assert!((r.value - 4.0).abs() < 1e-5);
        assert!(
            (lemma1_exact_probability(0.5f32, 1.0, &params) as f64 - lemma1_exact_probability(0.5, 1.0, &p(1.0))).abs()
                < 1e-5
        );
    }

    proptest! {
        #[test]
        fn phi_tm_continuous_at_branch_point(c in 0.2f64..5.0, m in 0.2f64..5.0) {
            let params = p(c);
            let t = free_duration(m, &params);
            let interior = phi_m(m, &params);
            let boundary = 2.0 * c * m / t + c * c * t / 3.0;
            prop_assert!((interior - boundary).abs() <= 1e-12 * interior);
        }

        #[test]
        fn phi_tm_nonincreasing_in_horizon(c in 0.2f64..5.0, m in 0.2f64..5.0) {
            let params = p(c);
            let mut prev = f64::INFINITY;
            for k in 1..200 {
                let v = phi_tm(0.05 * k as f64, m, &params).value;
                prop_assert!(v <= prev * (1.0 + 1e-14));
                prev = v;
            }
        }

        #[test]
        fn psi_bounded_below_by_rate(
            c in 0.2f64..5.0, m in 0.2f64..5.0, t in 0.2f64..5.0,
            a in 0.0f64..5.0, frac in 1e-3f64..1.0,
        ) {
            let params = p(c);
            let s = frac * t;
            let phi = phi_tm(t, m, &params).value;
            prop_assert!(psi(m, a, s, &params).unwrap() >= phi * (1.0 - 1e-12));
        }

        #[test]
        fn theorem1_in_unit_interval(c in 0.1f64..5.0, u in 0.0f64..100.0, t in 0.01f64..20.0) {
            let params = p(c);
            prop_assert!(theorem1_exponent(u, t, &params) < 0.0);
            let v = theorem1_asymptotic(u, t, &params);
            prop_assert!((0.0..1.0).contains(&v));
        }
    }
}
