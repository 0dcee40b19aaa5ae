//! Domain types shared by every module: the queue parameter, grid paths,
//! simulated workload traces, rate-function results and Monte Carlo
//! estimator reports.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// The single physical parameter of the Brownian storage model: the drain
/// rate `c`. The stationary workload is exponential with rate `2c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams<T>", bound(serialize = "T: Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct QueueParams<T> {
    c: T,
}

#[derive(Deserialize)]
struct RawParams<T> {
    c: T,
}

impl<T: Real> TryFrom<RawParams<T>> for QueueParams<T> {
    type Error = Error;
    fn try_from(raw: RawParams<T>) -> Result<Self> {
        QueueParams::new(raw.c)
    }
}

impl<T: Real> QueueParams<T> {
    pub fn new(c: T) -> Result<Self> {
        // NaN fails the comparison as well
        if c > T::zero() && c.is_finite() {
            Ok(Self { c })
        } else {
            Err(Error::NonPositiveDrainRate(c.to_f64_lossy()))
        }
    }

    #[inline]
    pub fn c(&self) -> T {
        self.c
    }

    /// Rate of the exponential stationary law of `Q(0)`.
    #[inline]
    pub fn stationary_rate(&self) -> T {
        T::lit(2.0) * self.c
    }

    /// `E Q(0) = 1/(2c)`.
    #[inline]
    pub fn stationary_mean(&self) -> T {
        self.stationary_rate().recip()
    }
}

/// Build [`QueueParams`], rejecting `c <= 0`.
pub fn validate_params<T: Real>(c: T) -> Result<QueueParams<T>> {
    QueueParams::new(c)
}

/// A path sampled on a uniform time grid `t0 + k·h`, `k = 0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid<T>", bound(serialize = "T: Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct GridPath<T> {
    t0: T,
    h: T,
    values: Vec<T>,
}

#[derive(Deserialize)]
struct RawGrid<T> {
    t0: T,
    h: T,
    values: Vec<T>,
}

impl<T: Real> TryFrom<RawGrid<T>> for GridPath<T> {
    type Error = Error;
    fn try_from(raw: RawGrid<T>) -> Result<Self> {
        GridPath::new(raw.t0, raw.h, raw.values)
    }
}

impl<T: Real> GridPath<T> {
    pub fn new(t0: T, h: T, values: Vec<T>) -> Result<Self> {
        if !(h > T::zero()) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("step must be positive, got {h}")));
        }
        if values.is_empty() {
            return Err(Error::InvalidGrid("path has no samples".into()));
        }
        Ok(Self { t0, h, values })
    }

    /// Samples `f` on `n` equally spaced points covering `[t0, t1]`.
    pub fn from_fn(t0: T, t1: T, n: usize, f: impl Fn(T) -> T) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {n}")));
        }
        let h = (t1 - t0) / T::from_usize_lossy(n - 1);
        let values = (0..n).map(|k| f(t0 + T::from_usize_lossy(k) * h)).collect();
        Self::new(t0, h, values)
    }

    #[inline]
    pub fn t0(&self) -> T {
        self.t0
    }

    #[inline]
    pub fn h(&self) -> T {
        self.h
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn time(&self, k: usize) -> T {
        self.t0 + T::from_usize_lossy(k) * self.h
    }

    /// Length of the covered interval, `(len - 1)·h`.
    pub fn span(&self) -> T {
        T::from_usize_lossy(self.values.len() - 1) * self.h
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.values.iter().enumerate().map(|(k, &v)| (self.time(k), v))
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::InvalidGrid(format!("length mismatch: {} vs {}", values.len(), self.values.len())));
        }
        Self::new(self.t0, self.h, values)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "value"])?;
        for (t, v) in self.iter() {
            wtr.write_record([fmt_real(t), fmt_real(v)])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a `t,value` CSV. Rows must lie on a uniform grid; the step is
    /// taken from the first two rows.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut ts = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<T> {
                let s = rec.get(i).ok_or_else(|| Error::InvalidGrid("short CSV row".into()))?;
                let v: f64 = s.trim().parse().map_err(|_| Error::InvalidGrid(format!("not a number: {s:?}")))?;
                Ok(T::lit(v))
            };
            ts.push(parse(0)?);
            values.push(parse(1)?);
        }
        if ts.is_empty() {
            return Err(Error::InvalidGrid("empty CSV".into()));
        }
        let t0 = ts[0];
        let h = if ts.len() > 1 { ts[1] - t0 } else { T::one() };
        let tol = T::lit(1e-9) * (T::one() + t0.abs() + h.abs() * T::from_usize_lossy(ts.len()));
        for (k, &t) in ts.iter().enumerate() {
            if (t - (t0 + T::from_usize_lossy(k) * h)).abs() > tol {
                return Err(Error::InvalidGrid(format!("non-uniform grid at row {k}")));
            }
        }
        Self::new(t0, h, values)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

impl<T: Real + Serialize> GridPath<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

impl<T: Real + Serialize + for<'a> Deserialize<'a>> GridPath<T> {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Shortest decimal that round-trips to the same binary value.
pub(crate) fn fmt_real<T: Real>(v: T) -> String {
    format!("{}", v.to_f64_lossy())
}

/// `x` to `digits` significant digits for human-readable tables; fixed
/// notation for moderate magnitudes, scientific otherwise.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..10).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.prec$e}", prec = digits - 1)
    }
}

/// Trapezoid rule on the grid: `h·(f₀/2 + f₁ + … + f_{n−2} + f_{n−1}/2)`.
/// Exact for piecewise-linear paths; zero for a single sample.
pub fn trapezoid_area<T: Real>(grid: &GridPath<T>) -> T {
    let v = grid.values();
    let n = v.len();
    if n < 2 {
        return T::zero();
    }
    let half = T::lit(0.5);
    let inner = v[1..n - 1].iter().fold(T::zero(), |acc, &x| acc + x);
    grid.h() * (half * (v[0] + v[n - 1]) + inner)
}

/// One δ-cycle: up-crossing of `2δ` at `sigma`, down-crossing of `δ` at
/// `tau`, area `h_area` swept in between, duration `xi = tau − sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub sigma: f64,
    pub tau: f64,
    #[serde(rename = "H")]
    pub h_area: f64,
    pub xi: f64,
}

/// A simulated realization of the reflected workload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadTrace {
    pub params: QueueParams<f64>,
    pub grid: GridPath<f64>,
    pub area: f64,
    pub hit_zero_at: Option<f64>,
    pub cycles: Vec<CycleRecord>,
}

impl WorkloadTrace {
    /// Wraps an externally produced workload path (e.g. a synthetic one).
    /// Values must be nonnegative; the area is the trapezoid rule.
    pub fn from_grid(params: QueueParams<f64>, grid: GridPath<f64>, hit_zero_at: Option<f64>) -> Result<Self> {
        if let Some(bad) = grid.values().iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidGrid(format!("workload must be nonnegative, found {bad}")));
        }
        let area = trapezoid_area(&grid);
        Ok(Self { params, grid, area, hit_zero_at, cycles: Vec::new() })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "Q"])?;
        for (t, q) in self.grid.iter() {
            wtr.write_record([fmt_real(t), fmt_real(q)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn write_cycles_csv<W: Write>(cycles: &[CycleRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["sigma", "tau", "H", "xi"])?;
    for c in cycles {
        wtr.write_record([c.sigma, c.tau, c.h_area, c.xi].map(fmt_real))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Which branch of the piecewise rate function is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// The optimal duration `√(6M/c)` fits strictly inside the horizon.
    Interior,
    /// The optimal duration is clipped to the horizon.
    Boundary,
}

/// A decay rate together with its minimizing start level and duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateResult<T> {
    pub value: T,
    pub a_star: T,
    pub s_star: T,
    pub branch: Branch,
}

/// Default two-sided confidence level for every interval in the crate.
pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// Two-sided standard normal quantile `z` with `P(|N| <= z) = level`.
pub fn z_for_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level {level} not in (0,1)")));
    }
    let target = 0.5 * (1.0 - level);
    // bisection on the upper tail; monotone and more than fast enough
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid.norm_sf() > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Monte Carlo point estimate with its uncertainty and provenance.
///
/// For binomial estimates the interval is Wilson's and `std_error` is its
/// half-width divided by `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_replications: u64,
    pub seed: u64,
    /// Seconds.
    pub wall_time: f64,
    /// Hit count for proportion estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hits: Option<u64>,
}

impl EstimatorReport {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }

    /// Whether `x` lies within `k` half-widths of the point estimate.
    pub fn within_half_widths(&self, x: f64, k: f64) -> bool {
        (x - self.estimate).abs() <= k * self.half_width()
    }

    pub fn overlaps(&self, other: &EstimatorReport) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.5, 10), "0.5000000000");
        assert_eq!(fmt_sig(3.81e-3, 3), "0.00381");
        assert_eq!(fmt_sig(-1234.5678, 6), "-1234.57");
        assert_eq!(fmt_sig(1.5e-9, 4), "1.500e-9");
        assert_eq!(fmt_sig(0.0, 10), "0");
    }

    #[test]
    fn validate_params_accepts_positive_only() {
        assert_eq!(validate_params(1.0).unwrap().c(), 1.0);
        assert!(matches!(validate_params(0.0), Err(Error::NonPositiveDrainRate(_))));
        assert!(matches!(validate_params(-2.5), Err(Error::NonPositiveDrainRate(_))));
        assert!(validate_params(f64::NAN).is_err());
        assert!(validate_params(0.5f32).is_ok());
    }

    #[test]
    fn params_json_rejects_bad_rate() {
        let p: QueueParams<f64> = serde_json::from_str(r#"{"c": 2.0}"#).unwrap();
        assert_eq!(p.stationary_rate(), 4.0);
        assert!(serde_json::from_str::<QueueParams<f64>>(r#"{"c": 0.0}"#).is_err());
    }

    #[test]
    fn trapezoid_examples() {
        let constant = GridPath::new(0.0, 0.25, vec![1.0; 5]).unwrap();
        assert_eq!(trapezoid_area(&constant), 1.0);
        let ramp = GridPath::new(0.0, 0.5, vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(trapezoid_area(&ramp), 0.5);
        let tent = GridPath::new(0.0, 1.0, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(trapezoid_area(&tent), 1.0);
        let single = GridPath::new(0.0, 1.0, vec![3.0]).unwrap();
        assert_eq!(trapezoid_area(&single), 0.0);
    }

    #[test]
    fn grid_rejects_bad_step_and_empty() {
        assert!(GridPath::new(0.0, 0.0, vec![1.0]).is_err());
        assert!(GridPath::new(0.0, -1.0, vec![1.0]).is_err());
        assert!(GridPath::<f64>::new(0.0, 1.0, vec![]).is_err());
        let g = GridPath::new(1.0, 0.5, vec![0.0; 5]).unwrap();
        assert_eq!(g.span(), 2.0);
        assert_eq!(g.time(4), 3.0);
    }

    #[test]
    fn csv_rejects_non_uniform_grid() {
        let data = "t,value\n0,1\n0.5,2\n1.5,3\n";
        assert!(matches!(GridPath::<f64>::read_csv(data.as_bytes()), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn z_for_default_level() {
        let z = z_for_level(DEFAULT_CONFIDENCE).unwrap();
        assert!((z - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((z_for_level(0.99).unwrap() - 2.575_829_303_548_901).abs() < 1e-12);
        assert!(z_for_level(1.0).is_err());
    }

    #[test]
    fn report_json_has_all_fields() {
        let r = EstimatorReport {
            estimate: 0.1,
            std_error: 0.01,
            ci_low: 0.074,
            ci_high: 0.126,
            n_replications: 100,
            seed: 7,
            wall_time: 0.5,
            hits: None,
        };
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        for k in ["estimate", "std_error", "ci_low", "ci_high", "n_replications", "seed", "wall_time"] {
            assert!(v.get(k).is_some(), "missing {k}");
        }
        let back: EstimatorReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn trapezoid_is_positively_homogeneous(
            vals in prop::collection::vec(0.0f64..10.0, 1..50),
            h in 1e-3f64..2.0,
            lambda in 0.0f64..5.0,
        ) {
            let g = GridPath::new(0.0, h, vals.clone()).unwrap();
            let scaled = g.with_values(vals.iter().map(|v| v * lambda).collect()).unwrap();
            let a = trapezoid_area(&g);
            prop_assert!(a >= 0.0);
            prop_assert!((trapezoid_area(&scaled) - lambda * a).abs() <= 1e-12 * (1.0 + lambda * a));
        }

        #[test]
        fn grid_csv_and_json_round_trip(
            vals in prop::collection::vec(-1e6f64..1e6, 2..40),
            t0 in -10.0f64..10.0,
            h in 1e-4f64..1.0,
        ) {
            let g = GridPath::new(t0, h, vals).unwrap();
            let mut buf = Vec::new();
            g.write_csv(&mut buf).unwrap();
            let back = GridPath::<f64>::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.values(), g.values());
            prop_assert!((back.h() - g.h()).abs() < 1e-12);
            let j = GridPath::<f64>::from_json(&g.to_json().unwrap()).unwrap();
            prop_assert_eq!(j, g);
        }
    }
}
