//! Most likely driving paths, the discrete Skorokhod map and the Schilder
//! rate functional `½∫(f′)²` on grid paths.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{free_duration, psi_unchecked};
use crate::error::{Error, Result};
use crate::model::{fmt_real, Branch, GridPath, QueueParams, RateResult};
use crate::optimize::brent_minimize;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// The queue starts empty, fills up and drains back to zero at `s*`.
    EmptyStart,
    /// The queue is at `a*` at both ends of the horizon.
    SymmetricBusy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct MostLikelyPath<T> {
    /// Values of `f*` on `[0, T]`.
    pub grid: GridPath<T>,
    pub a_star: T,
    pub scenario: Scenario,
}

/// The cheapest driving path producing area `M` within horizon `T`.
///
/// With `s* = √(6M/c)`: if `s* < T` the path is `2cr − (cr²/6)√(6c/M)` up to
/// `s*` and flat afterwards, and the queue starts empty. Otherwise it is
/// `2cr − cr²/T` on the whole horizon and the queue starts at
/// `a* = M/T − cT/6`.
pub fn most_likely_path<T: Real>(
    horizon: T,
    m: T,
    params: &QueueParams<T>,
    n_grid: usize,
) -> Result<MostLikelyPath<T>> {
    if !(horizon > T::zero()) || !(m > T::zero()) {
        return Err(Error::domain(format!("T and M must be positive, got T={horizon}, M={m}")));
    }
    if n_grid < 2 {
        return Err(Error::InvalidGrid(format!("need at least 2 grid points, got {n_grid}")));
    }
    let c = params.c();
    let two = T::lit(2.0);
    let s_star = free_duration(m, params);
    let (scenario, a_star, curvature, knee) = if s_star < horizon {
        (Scenario::EmptyStart, T::zero(), c / s_star, s_star)
    } else {
        (Scenario::SymmetricBusy, m / horizon - c * horizon / T::lit(6.0), c / horizon, horizon)
    };
    // both branches share the form 2cr − (c/L)r², flat after r = L
    let f = |r: T| {
        let r = r.min(knee);
        two * c * r - curvature * r * r
    };
    let grid = GridPath::from_fn(T::zero(), horizon, n_grid, f)?;
    Ok(MostLikelyPath { grid, a_star, scenario })
}

impl<T: Real> MostLikelyPath<T> {
    /// Workload driven by this path, started at `a*`.
    pub fn workload(&self, params: &QueueParams<T>) -> GridPath<T> {
        skorokhod_map(&self.grid, params, self.a_star).expect("a* is nonnegative")
    }

    /// Writes `r,f_star,q` rows.
    pub fn write_csv<W: Write>(&self, params: &QueueParams<T>, w: W) -> Result<()> {
        let q = self.workload(params);
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["r", "f_star", "q"])?;
        for ((r, f), qv) in self.grid.iter().zip(q.values()) {
            wtr.write_record([fmt_real(r), fmt_real(f), fmt_real(*qv)])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, params: &QueueParams<T>, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(params, std::fs::File::create(path)?)
    }
}

/// `½ Σ ((f_{k+1} − f_k)/h)² h`, the forward-difference quadrature of
/// `½∫(f′)²`; exact for piecewise-linear paths.
pub fn rate_functional<T: Real>(path: &GridPath<T>) -> T {
    let h = path.h();
    let sum = path
        .values()
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            d * d
        })
        .fold(T::zero(), |a, b| a + b);
    T::lit(0.5) * sum / h
}

/// Discrete reflection of `f` with drain `c`, seeded at `q0`:
/// `q_k = max(q_{k−1} + f_k − f_{k−1} − ch, 0)`.
pub fn skorokhod_map<T: Real>(path: &GridPath<T>, params: &QueueParams<T>, q0: T) -> Result<GridPath<T>> {
    if !(q0 >= T::zero()) {
        return Err(Error::domain(format!("initial level must be nonnegative, got {q0}")));
    }
    let drain = params.c() * path.h();
    let mut q = q0;
    let values = std::iter::once(q0)
        .chain(path.values().windows(2).map(|w| {
            q = (q + w[1] - w[0] - drain).max(T::zero());
            q
        }))
        .collect();
    path.with_values(values)
}

const MAX_ITER: usize = 500;

/// Numerical `inf_{a≥0} inf_{s∈(0,T]} ψ(M, a, s)` by nested Brent searches,
/// independent of the closed-form minimizer.
///
/// For fixed `s` the excursion cost vanishes at `a = (M + cs²/2)/s` and ψ is
/// convex in `a`, so the inner search runs on `[0, (M + cs²/2)/s]`. The outer
/// search runs on `(0, T]`; both endpoints `a = 0` and `s = T` are also
/// evaluated directly since the optimum often sits on them.
pub fn minimize_psi_numeric<T: Real>(horizon: T, m: T, params: &QueueParams<T>, tol: T) -> Result<RateResult<T>> {
    if !(horizon > T::zero()) || !(m > T::zero()) {
        return Err(Error::domain(format!("T and M must be positive, got T={horizon}, M={m}")));
    }
    if !(tol > T::zero()) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    let c = params.c();
    let inner = |s: T| -> Result<(T, T)> {
        let a_max = (m + T::lit(0.5) * c * s * s) / s;
        let cost = |a: T| psi_unchecked(m, a, s, params);
        let min = brent_minimize(cost, T::zero(), a_max, tol, MAX_ITER)?;
        let at_zero = cost(T::zero());
        Ok(if at_zero <= min.f { (T::zero(), at_zero) } else { (min.x, min.f) })
    };
    let mut failure = None;
    let outer = brent_minimize(
        |s: T| match inner(s) {
            Ok((_, v)) => v,
            Err(e) => {
                failure.get_or_insert(e);
                T::infinity()
            }
        },
        horizon * T::lit(1e-9),
        horizon,
        tol,
        MAX_ITER,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let (a_in, v_in) = inner(outer.x)?;
    let (a_end, v_end) = inner(horizon)?;
    let (a_star, s_star, value) = if v_end <= v_in { (a_end, horizon, v_end) } else { (a_in, outer.x, v_in) };
    // branch read off the located optimum
    let branch =
        if horizon - s_star <= tol.sqrt() * (T::one() + horizon) { Branch::Boundary } else { Branch::Interior };
    Ok(RateResult { value, a_star, s_star, branch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::{minimize_psi_closed_form, phi_tm};
    use crate::model::trapezoid_area;
    use proptest::prelude::*;

    fn p(c: f64) -> QueueParams<f64> {
        QueueParams::new(c).unwrap()
    }

    #[test]
    fn empty_start_example() {
        let path = most_likely_path(3.0, 1.0, &p(1.0), 30001).unwrap();
        assert_eq!(path.scenario, Scenario::EmptyStart);
        assert_eq!(path.a_star, 0.0);
        let s = 6f64.sqrt();
        let v = path.grid.values();
        assert_eq!(v[0], 0.0);
        let k = (s / path.grid.h()).ceil() as usize;
        assert!((v[k] - s).abs() < 1e-12);
        assert!(v[k..].iter().all(|&x| x == v[k]));
    }

    #[test]
    fn symmetric_busy_example() {
        let path = most_likely_path(3.0, 6.0, &p(1.0), 3001).unwrap();
        assert_eq!(path.scenario, Scenario::SymmetricBusy);
        assert!((path.a_star - 1.5).abs() < 1e-15);
        let v = path.grid.values();
        assert!((v[v.len() - 1] - 3.0).abs() < 1e-12);
        // slope at T/2 is c
        let h = path.grid.h();
        let mid = v.len() / 2;
        assert!(((v[mid + 1] - v[mid - 1]) / (2.0 * h) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_inputs() {
        assert!(most_likely_path(0.0, 1.0, &p(1.0), 10).is_err());
        assert!(most_likely_path(1.0, 1.0, &p(1.0), 1).is_err());
        assert!(minimize_psi_numeric(1.0, -1.0, &p(1.0), 1e-9).is_err());
    }

    #[test]
    fn rate_functional_examples() {
        let flat = GridPath::new(0.0, 0.1, vec![2.0; 11]).unwrap();
        assert_eq!(rate_functional(&flat), 0.0);
        let line = GridPath::from_fn(0.0, 1.0, 101, |r: f64| r).unwrap();
        assert!((rate_functional(&line) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rate_identity_empty_start() {
        let path = most_likely_path(3.0, 1.0, &p(1.0), 100_000).unwrap();
        let total = rate_functional(&path.grid) + 2.0 * path.a_star;
        assert!((total - 2.0 * 6f64.sqrt() / 3.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn skorokhod_pure_drain() {
        let zero = GridPath::new(0.0, 0.01, vec![0.0; 301]).unwrap();
        let q = skorokhod_map(&zero, &p(1.0), 1.0).unwrap();
        for (t, v) in q.iter() {
            assert!((v - (1.0 - t).max(0.0)).abs() < 1e-12);
        }
        assert!(skorokhod_map(&zero, &p(1.0), -1.0).is_err());
    }

    #[test]
    fn empty_start_workload_drops_at_free_duration() {
        let params = p(1.0);
        let path = most_likely_path(3.0, 1.0, &params, 30001).unwrap();
        let h = path.grid.h();
        let q = path.workload(&params);
        let first_zero = q.values().iter().skip(1).position(|&v| v == 0.0).unwrap() + 1;
        assert!((q.time(first_zero) - 6f64.sqrt()).abs() <= 2.0 * h);
        assert!(trapezoid_area(&q) >= 1.0 - 10.0 * h);
    }

    #[test]
    fn symmetric_busy_workload_returns_to_a_star() {
        let params = p(1.0);
        let path = most_likely_path(3.0, 6.0, &params, 30001).unwrap();
        let h = path.grid.h();
        let q = path.workload(&params);
        let v = q.values();
        assert!((v[0] - 1.5).abs() <= 2.0 * h);
        assert!((v[v.len() - 1] - 1.5).abs() <= 2.0 * h);
        assert!(trapezoid_area(&q) >= 6.0 - 10.0 * h);
    }

    #[test]
    fn csv_export() {
        let params = p(1.0);
        let path = most_likely_path(3.0, 1.0, &params, 1000).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&params, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("r,f_star,q"));
        assert_eq!(lines.count(), 1000);
    }

    #[test]
    fn numeric_minimizer_examples() {
        let params = p(1.0);
        let r = minimize_psi_numeric(7.0, 6.0, &params, 1e-10).unwrap();
        assert!((r.value - 4.0).abs() < 1e-8, "{r:?}");
        assert!((r.s_star - 6.0).abs() < 1e-3 && r.a_star.abs() < 1e-4);
        assert_eq!(r.branch, Branch::Interior);
        let r = minimize_psi_numeric(3.0, 6.0, &params, 1e-10).unwrap();
        assert!((r.value - 5.0).abs() < 1e-8, "{r:?}");
        assert!((r.s_star - 3.0).abs() < 1e-6 && (r.a_star - 1.5).abs() < 1e-4);
        assert_eq!(r.branch, Branch::Boundary);
        let r = minimize_psi_numeric(6.0, 6.0, &params, 1e-10).unwrap();
        assert!((r.value - 4.0).abs() < 1e-8, "{r:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn numeric_matches_closed_form(c in 0.2f64..5.0, t in 0.2f64..5.0, m in 0.2f64..5.0) {
            let params = p(c);
            let num = minimize_psi_numeric(t, m, &params, 1e-10).unwrap();
            let exact = minimize_psi_closed_form(t, m, &params);
            prop_assert!((num.value - exact.value).abs() <= 1e-7 * (1.0 + exact.value),
                "{num:?} vs {exact:?}");
            prop_assert!((num.s_star - exact.s_star).abs() <= 1e-4 * (1.0 + exact.s_star));
        }

        #[test]
        fn rate_identity(c in 0.2f64..5.0, t in 0.2f64..5.0, m in 0.2f64..5.0) {
            let params = p(c);
            let path = most_likely_path(t, m, &params, 100_000).unwrap();
            let total = rate_functional(&path.grid) + 2.0 * path.a_star * c;
            let phi = phi_tm(t, m, &params).value;
            prop_assert!((total - phi).abs() <= 1e-5, "{total} vs {phi}");
        }

        #[test]
        fn skorokhod_nonnegative_and_monotone(
            steps in prop::collection::vec(-1.0f64..1.0, 2..200),
            q_lo in 0.0f64..2.0,
            extra in 0.0f64..2.0,
        ) {
            let mut f = 0.0;
            let values: Vec<f64> = std::iter::once(0.0).chain(steps.iter().map(|d| { f += d; f })).collect();
            let path = GridPath::new(0.0, 0.05, values).unwrap();
            let params = p(1.0);
            let lo = skorokhod_map(&path, &params, q_lo).unwrap();
            let hi = skorokhod_map(&path, &params, q_lo + extra).unwrap();
            for (a, b) in lo.values().iter().zip(hi.values()) {
                prop_assert!(*a >= 0.0);
                prop_assert!(b >= a);
            }
        }

        #[test]
        fn path_starts_at_zero(t in 0.1f64..10.0, m in 0.1f64..10.0, c in 0.1f64..5.0) {
            let path = most_likely_path(t, m, &p(c), 50).unwrap();
            prop_assert_eq!(path.grid.values()[0], 0.0);
            prop_assert_eq!(path.scenario == Scenario::EmptyStart, free_duration(m, &p(c)) < t);
        }
    }
}
