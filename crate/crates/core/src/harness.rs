//! Monte Carlo drivers that compare simulated workloads with the closed
//! forms.
//!
//! Replication `i` always draws from stream `i` of the configured seed.
//! Replications are grouped into fixed blocks of [`BLOCK`] indices; each
//! block is folded sequentially and the block results are merged in index
//! order, so every statistic is bit-identical for any number of threads.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{phi_m, phi_tm, theorem1_asymptotic};
use crate::error::{Error, Result};
use crate::laplace::{mean_stationary_area, mean_transient_area, stationary_lt, transient_lt};
use crate::model::{fmt_real, z_for_level, EstimatorReport, QueueParams, DEFAULT_CONFIDENCE};
use crate::rng::{stream, NoiseSource};
use crate::sim::{sample_first_passage, SimConfig, Stepper};

/// Replications per deterministic aggregation block.
pub const BLOCK: u64 = 1024;

/// Minimum expected hit count for a tail-probability grid point.
pub const MIN_EXPECTED_HITS: f64 = 20.0;

/// Stream offset separating independent families of replications that share
/// a seed (for example the two sides of the scaling identity).
const FAMILY_STRIDE: u64 = 1 << 40;

// ---------------------------------------------------------------------------
// statistics

/// Wilson score interval for `hits` successes out of `n`.
pub fn wilson_interval(hits: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = hits as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Exact upper confidence bound for a proportion with no hits in `n` trials:
/// `1 − (α/2)^{1/n}` with `α = 1 − level` (≈ 3.69/n at 95%).
pub fn zero_hits_upper_bound(n: u64, level: f64) -> f64 {
    let alpha = 1.0 - level;
    -((0.5 * alpha).ln() / n as f64).exp_m1()
}

/// Proportion estimate with a Wilson interval; `std_error` is the interval
/// half-width over `z`. With no hits the upper end is the exact bound of
/// [`zero_hits_upper_bound`].
pub fn proportion_report(hits: u64, n: u64, level: f64, seed: u64, wall_time: f64) -> Result<EstimatorReport> {
    let z = z_for_level(level)?;
    let (lo, hi) = if hits == 0 { (0.0, zero_hits_upper_bound(n, level)) } else { wilson_interval(hits, n, z) };
    Ok(EstimatorReport {
        estimate: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
        std_error: 0.5 * (hi - lo) / z,
        ci_low: lo,
        ci_high: hi,
        n_replications: n,
        seed,
        wall_time,
        hits: Some(hits),
    })
}

/// Sample mean with a normal-theory interval.
pub fn mean_report(acc: &MeanAcc, level: f64, seed: u64, wall_time: f64) -> Result<EstimatorReport> {
    let z = z_for_level(level)?;
    let se = acc.std_error();
    let m = acc.mean();
    Ok(EstimatorReport {
        estimate: m,
        std_error: se,
        ci_low: m - z * se,
        ci_high: m + z * se,
        n_replications: acc.n,
        seed,
        wall_time,
        hits: None,
    })
}

/// Kolmogorov–Smirnov statistic `sup |F_n − F|` of `samples` against `cdf`.
/// Sorts `samples` in place.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value `P(D_n ≥ d)` from the Kolmogorov distribution, with
/// the finite-`n` correction `λ = (√n + 0.12 + 0.11/√n)·d`.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// deterministic parallel aggregation

/// Associative per-block state.
pub trait Accumulator: Default + Send {
    fn merge(&mut self, other: Self);
}

impl Accumulator for u64 {
    fn merge(&mut self, other: Self) {
        *self += other;
    }
}

impl<A: Accumulator> Accumulator for Vec<A> {
    fn merge(&mut self, other: Self) {
        if self.len() < other.len() {
            self.resize_with(other.len(), A::default);
        }
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

impl<A: Accumulator, B: Accumulator> Accumulator for (A, B) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
    }
}

/// Count, sum and sum of squares.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanAcc {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MeanAcc {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

impl Accumulator for MeanAcc {
    fn merge(&mut self, other: Self) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }
}

/// Samples kept in replication order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples(pub Vec<f64>);

impl Accumulator for Samples {
    fn merge(&mut self, other: Self) {
        self.0.extend(other.0);
    }
}

/// Thread pool plus the confidence level used for every reported interval.
pub struct Runner {
    pool: rayon::ThreadPool,
    level: f64,
}

impl Runner {
    /// `threads = None` uses the available parallelism.
    pub fn new(threads: Option<usize>) -> Result<Self> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            if t == 0 {
                return Err(Error::InvalidConfig("thread count must be positive".into()));
            }
            b = b.num_threads(t);
        }
        let pool = b.build().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(Self { pool, level: DEFAULT_CONFIDENCE })
    }

    pub fn with_level(mut self, level: f64) -> Result<Self> {
        z_for_level(level)?;
        self.level = level;
        Ok(self)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// Folds `f(i, acc)` over `i in 0..n` block by block and merges the
    /// blocks in index order.
    pub fn run<A, F>(&self, n: u64, f: F) -> Result<A>
    where
        A: Accumulator,
        F: Fn(u64, &mut A) -> Result<()> + Sync,
    {
        let blocks = n.div_ceil(BLOCK);
        let parts: Vec<Result<A>> = self.pool.install(|| {
            (0..blocks)
                .into_par_iter()
                .map(|b| {
                    let mut acc = A::default();
                    for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                        f(i, &mut acc)?;
                    }
                    Ok(acc)
                })
                .collect()
        });
        let mut total = A::default();
        for p in parts {
            total.merge(p?);
        }
        Ok(total)
    }
}

// ---------------------------------------------------------------------------
// tail probabilities

/// Horizon as a function of the level `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonRule {
    Fixed(f64),
    /// `T(u) = coef · u^exponent`.
    Power {
        coef: f64,
        exponent: f64,
    },
}

impl HorizonRule {
    pub fn horizon(&self, u: f64) -> f64 {
        match *self {
            HorizonRule::Fixed(t) => t,
            HorizonRule::Power { coef, exponent } => coef * u.powf(exponent),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            HorizonRule::Fixed(t) => t >= 0.0 && t.is_finite(),
            HorizonRule::Power { coef, exponent } => coef > 0.0 && exponent >= 0.0 && coef.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid horizon rule {self:?}")))
        }
    }
}

/// Estimate of `P(∫₀^{T(u)} Q dt > m·u)` at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub u: f64,
    /// Horizon actually simulated (rounded to the step grid).
    pub horizon: f64,
    pub report: EstimatorReport,
    /// Upper confidence bound when no replication hit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_hits: Option<f64>,
}

impl TailEstimate {
    /// `−ln(π̂)/√u`, infinite without hits.
    pub fn rate(&self) -> f64 {
        -self.report.estimate.ln() / self.u.sqrt()
    }

    /// Interval for the rate induced by the probability interval.
    pub fn rate_interval(&self) -> (f64, f64) {
        let su = self.u.sqrt();
        (-self.report.ci_high.ln() / su, -self.report.ci_low.ln() / su)
    }
}

fn check_grid(u_grid: &[f64]) -> Result<()> {
    if u_grid.is_empty() {
        return Err(Error::InvalidGrid("empty u grid".into()));
    }
    if u_grid.iter().any(|u| !(*u >= 0.0) || !u.is_finite()) || u_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("u grid must be nonnegative and strictly increasing".into()));
    }
    Ok(())
}

/// Estimates `P(∫₀^{T(u)} Q dt > m·u)` for every `u` in `u_grid` from the same
/// replications: each replication starts from the stationary law, runs to
/// the largest horizon and compares the running area with every threshold.
pub fn tail_grid(
    params: &QueueParams<f64>,
    rule: HorizonRule,
    m: f64,
    u_grid: &[f64],
    sim: &SimConfig,
    n: u64,
    runner: &Runner,
) -> Result<Vec<TailEstimate>> {
    check_grid(u_grid)?;
    rule.validate()?;
    if !(m > 0.0) {
        return Err(Error::domain(format!("area scale must be positive, got {m}")));
    }
    if !(sim.h > 0.0) {
        return Err(Error::InvalidConfig(format!("step h must be positive, got {}", sim.h)));
    }
    let h = sim.h;
    let steps: Vec<usize> = u_grid.iter().map(|&u| (rule.horizon(u) / h).round() as usize).collect();
    let order_ok = steps.windows(2).all(|w| w[0] <= w[1]);
    let k_max = *steps.iter().max().unwrap_or(&0);
    let thresholds: Vec<f64> = u_grid.iter().map(|&u| m * u).collect();
    let stepper = Stepper::new(params, h, sim.use_exact_step, false);
    let start = Instant::now();
    let hits: Vec<u64> = runner.run(n, |i, acc: &mut Vec<u64>| {
        if acc.is_empty() {
            acc.resize(u_grid.len(), 0);
        }
        let mut rng = stream(sim.seed, sim.stream_index + i);
        let mut q = crate::sim::sample_stationary_q0(params, &mut rng);
        let mut area = 0.0;
        let mut next = 0;
        if order_ok {
            for k in 0..=k_max {
                while next < steps.len() && steps[next] == k {
                    if area > thresholds[next] {
                        acc[next] += 1;
                    }
                    next += 1;
                }
                if k == k_max {
                    break;
                }
                let q1 = stepper.advance(q, &mut rng);
                area += 0.5 * h * (q + q1);
                q = q1;
            }
        } else {
            let mut prefix = Vec::with_capacity(k_max + 1);
            prefix.push(0.0);
            for _ in 0..k_max {
                let q1 = stepper.advance(q, &mut rng);
                area += 0.5 * h * (q + q1);
                q = q1;
                prefix.push(area);
            }
            for (j, &k) in steps.iter().enumerate() {
                if prefix[k] > thresholds[j] {
                    acc[j] += 1;
                }
            }
        }
        Ok(())
    })?;
    let wall = start.elapsed().as_secs_f64();
    u_grid
        .iter()
        .enumerate()
        .map(|(j, &u)| {
            let count = hits.get(j).copied().unwrap_or(0);
            let report = proportion_report(count, n, runner.level(), sim.seed, wall)?;
            let zero_hits = (count == 0).then_some(report.ci_high);
            Ok(TailEstimate { u, horizon: steps[j] as f64 * h, report, zero_hits })
        })
        .collect()
}

/// `π_{T(u)}(u) = P(∫₀^{T(u)} Q dt > u)` from `n` stationary replications.
pub fn estimate_pi(
    params: &QueueParams<f64>,
    rule: HorizonRule,
    u: f64,
    sim: &SimConfig,
    n: u64,
    runner: &Runner,
) -> Result<TailEstimate> {
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one replication".into()));
    }
    Ok(tail_grid(params, rule, 1.0, &[u], sim, n, runner)?.remove(0))
}

// ---------------------------------------------------------------------------
// marginal law

/// Result of checking the workload marginal against `Exp(2c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryCheck {
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    /// Estimate of `P(Q > 1)`.
    pub tail_at_one: EstimatorReport,
}

/// Draws `n` values of `Q(warm_in)` started from the stationary law.
pub fn sample_marginal(
    params: &QueueParams<f64>,
    sim: &SimConfig,
    n: u64,
    warm_in: f64,
    runner: &Runner,
) -> Result<Vec<f64>> {
    let stepper = Stepper::new(params, sim.h, sim.use_exact_step, false);
    let k = (warm_in / sim.h).round() as usize;
    let s: Samples = runner.run(n, |i, acc: &mut Samples| {
        let mut rng = stream(sim.seed, sim.stream_index + i);
        let mut q = crate::sim::sample_stationary_q0(params, &mut rng);
        for _ in 0..k {
            q = stepper.advance(q, &mut rng);
        }
        acc.0.push(q);
        Ok(())
    })?;
    Ok(s.0)
}

/// KS test of `Q(warm_in)` against `Exp(2c)` and the estimate of `P(Q > 1)`.
pub fn stationary_check(
    params: &QueueParams<f64>,
    sim: &SimConfig,
    n: u64,
    warm_in: f64,
    runner: &Runner,
) -> Result<StationaryCheck> {
    let start = Instant::now();
    let mut xs = sample_marginal(params, sim, n, warm_in, runner)?;
    let wall = start.elapsed().as_secs_f64();
    let hits = xs.iter().filter(|&&x| x > 1.0).count() as u64;
    let rate = params.stationary_rate();
    let d = ks_statistic(&mut xs, |x| if x <= 0.0 { 0.0 } else { -(-rate * x).exp_m1() });
    Ok(StationaryCheck {
        ks_statistic: d,
        ks_p_value: ks_p_value(d, xs.len()),
        tail_at_one: proportion_report(hits, n, runner.level(), sim.seed, wall)?,
    })
}

// ---------------------------------------------------------------------------
// many-sources scaling

/// Both sides of `P(∫₀ᵀ Q⁽ⁿ⁾ dt > M) = P(∫₀^{Tn} Q dt > Mn²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub n_superpose: usize,
    pub superposed: EstimatorReport,
    pub stretched: EstimatorReport,
}

impl ScalingResult {
    pub fn overlap(&self) -> bool {
        self.superposed.overlaps(&self.stretched)
    }
}

/// Left side: queue fed by the average of `n_superpose` independent
/// Brownian motions, started from its stationary law `Exp(2nc)`, on `[0, T]`
/// with step `h`. Right side: the single queue on `[0, Tn]` with step `nh`,
/// so both sides have the same number of steps. Replications on the two
/// sides use disjoint streams.
pub fn scaling_check(
    params: &QueueParams<f64>,
    horizon: f64,
    m: f64,
    n_superpose: usize,
    sim: &SimConfig,
    n_reps: u64,
    runner: &Runner,
) -> Result<ScalingResult> {
    if n_superpose == 0 {
        return Err(Error::domain("n_superpose must be at least 1"));
    }
    if !(horizon > 0.0) || !(m > 0.0) {
        return Err(Error::domain(format!("T and M must be positive, got T={horizon}, M={m}")));
    }
    let nf = n_superpose as f64;
    let k = ((horizon / sim.h).round() as usize).max(1);
    let h_left = horizon / k as f64;
    let h_right = nf * h_left;
    let left = Stepper::superposed(params, h_left, n_superpose, sim.use_exact_step, false);
    let right = Stepper::new(params, h_right, sim.use_exact_step, false);
    let rate_left = nf * params.stationary_rate();
    let rate_right = params.stationary_rate();
    let side = |stepper: &Stepper, h: f64, rate: f64, threshold: f64, family: u64| -> Result<EstimatorReport> {
        let start = Instant::now();
        let hits: u64 = runner.run(n_reps, |i, acc: &mut u64| {
            let mut rng = stream(sim.seed, family * FAMILY_STRIDE + sim.stream_index + i);
            let mut q = -rng.uniform_open().ln() / rate;
            let mut area = 0.0;
            for _ in 0..k {
                let q1 = stepper.advance(q, &mut rng);
                area += 0.5 * h * (q + q1);
                q = q1;
            }
            if area > threshold {
                *acc += 1;
            }
            Ok(())
        })?;
        proportion_report(hits, n_reps, runner.level(), sim.seed, start.elapsed().as_secs_f64())
    };
    Ok(ScalingResult {
        n_superpose,
        superposed: side(&left, h_left, rate_left, m, 0)?,
        stretched: side(&right, h_right, rate_right, m * nf * nf, 1)?,
    })
}

// ---------------------------------------------------------------------------
// regime studies

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Short,
    Intermediate,
    Long,
    BusyPeriod,
    Scaling,
}

/// Horizon rule and area scale of a tail regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TailRegime {
    /// `P(∫₀^{T(u)} Q > u)` with `T(u) = coef·u^exponent`, `exponent < 1/2`.
    Short { coef: f64, exponent: f64 },
    /// `P(∫₀^{T√u} Q > Mu)`.
    Intermediate { m: f64, horizon: f64 },
    /// `P(∫₀^{u^exponent} Q > Mu)`, `1/2 < exponent < 1`.
    Long { m: f64, exponent: f64 },
}

impl TailRegime {
    pub fn rule(&self) -> HorizonRule {
        match *self {
            TailRegime::Short { coef, exponent } => HorizonRule::Power { coef, exponent },
            TailRegime::Intermediate { horizon, .. } => HorizonRule::Power { coef: horizon, exponent: 0.5 },
            TailRegime::Long { exponent, .. } => HorizonRule::Power { coef: 1.0, exponent },
        }
    }

    pub fn area_scale(&self) -> f64 {
        match *self {
            TailRegime::Short { .. } => 1.0,
            TailRegime::Intermediate { m, .. } | TailRegime::Long { m, .. } => m,
        }
    }

    /// Limiting `−ln π/√u` for the intermediate and long regimes.
    pub fn target_rate(&self, params: &QueueParams<f64>) -> Option<f64> {
        match *self {
            TailRegime::Short { .. } => None,
            TailRegime::Intermediate { m, horizon } => Some(phi_tm(horizon, m, params).value),
            TailRegime::Long { m, .. } => Some(phi_m(m, params)),
        }
    }

    /// Predicted probability used by the feasibility gate.
    pub fn predicted(&self, u: f64, params: &QueueParams<f64>) -> f64 {
        match self.target_rate(params) {
            Some(rate) => (-rate * u.sqrt()).exp(),
            None => theorem1_asymptotic(u, self.rule().horizon(u), params),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub u: f64,
    pub horizon: f64,
    pub hits: u64,
    pub n: u64,
    pub pi_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `−ln(π̂)/√u`.
    pub rate: f64,
    /// Limiting rate for intermediate/long, the short-timescale asymptotic
    /// probability for short.
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeTable {
    pub regime: TailRegime,
    pub rows: Vec<RegimeRow>,
}

impl RegimeTable {
    /// Whether the rate column strictly increases along the grid.
    pub fn rate_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].rate > w[0].rate)
    }

    pub fn last(&self) -> &RegimeRow {
        self.rows.last().expect("tables are never empty")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["u", "T", "hits", "n", "pi_hat", "ci_low", "ci_high", "rate", "reference"])?;
        for r in &self.rows {
            wtr.write_record([
                fmt_real(r.u),
                fmt_real(r.horizon),
                r.hits.to_string(),
                r.n.to_string(),
                fmt_real(r.pi_hat),
                fmt_real(r.ci_low),
                fmt_real(r.ci_high),
                fmt_real(r.rate),
                fmt_real(r.reference),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Tail-probability trend table across `u_grid`. Fails with
/// `InfeasibleGrid` before simulating if `n` times the predicted
/// probability at the largest `u` is below [`MIN_EXPECTED_HITS`].
pub fn regime_study(
    params: &QueueParams<f64>,
    regime: TailRegime,
    u_grid: &[f64],
    sim: &SimConfig,
    n: u64,
    runner: &Runner,
) -> Result<RegimeTable> {
    check_grid(u_grid)?;
    let u_max = *u_grid.last().expect("grid checked non-empty");
    let expected = n as f64 * regime.predicted(u_max, params);
    if expected < MIN_EXPECTED_HITS {
        return Err(Error::InfeasibleGrid { u: u_max, expected, required: MIN_EXPECTED_HITS });
    }
    let estimates = tail_grid(params, regime.rule(), regime.area_scale(), u_grid, sim, n, runner)?;
    let rows = estimates
        .iter()
        .map(|e| RegimeRow {
            u: e.u,
            horizon: e.horizon,
            hits: e.report.hits.unwrap_or(0),
            n,
            pi_hat: e.report.estimate,
            ci_low: e.report.ci_low,
            ci_high: e.report.ci_high,
            rate: e.rate(),
            reference: regime.target_rate(params).unwrap_or_else(|| regime.predicted(e.u, params)),
        })
        .collect();
    Ok(RegimeTable { regime, rows })
}

/// Largest `u` on a grid whose predicted expected hit count is at least
/// [`MIN_EXPECTED_HITS`].
pub fn largest_feasible_u(params: &QueueParams<f64>, regime: TailRegime, u_grid: &[f64], n: u64) -> Option<f64> {
    u_grid.iter().copied().rev().find(|&u| n as f64 * regime.predicted(u, params) >= MIN_EXPECTED_HITS)
}

// ---------------------------------------------------------------------------
// targets and busy periods

/// Acceptance band for a target: a relative-error bound or a multiple of
/// the confidence-interval half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    Relative(f64),
    CiMultiple(f64),
}

impl Tolerance {
    pub fn accepts(&self, report: &EstimatorReport, reference: f64) -> bool {
        match *self {
            Tolerance::Relative(r) => (report.estimate - reference).abs() <= r * reference.abs(),
            Tolerance::CiMultiple(k) => report.within_half_widths(reference, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCheck {
    pub label: String,
    pub reference: f64,
    pub tolerance: Tolerance,
    pub report: EstimatorReport,
    pub passed: bool,
}

impl TargetCheck {
    pub fn new(label: impl Into<String>, reference: f64, tolerance: Tolerance, report: EstimatorReport) -> Self {
        let passed = tolerance.accepts(&report, reference);
        Self { label: label.into(), reference, tolerance, report, passed }
    }
}

/// Grids for [`busy_period_suite_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusyGrids {
    pub x_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
}

impl Default for BusyGrids {
    fn default() -> Self {
        Self { x_grid: vec![0.5, 1.0, 2.0], gamma_grid: vec![1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusySuiteReport {
    pub checks: Vec<TargetCheck>,
    /// Replications dropped because zero was not hit before the cap.
    pub censored: u64,
}

impl BusySuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Default)]
struct BusyAcc {
    area: MeanAcc,
    transforms: Vec<MeanAcc>,
    censored: u64,
}

impl Accumulator for BusyAcc {
    fn merge(&mut self, other: Self) {
        self.area.merge(other.area);
        self.transforms.merge(other.transforms);
        self.censored += other.censored;
    }
}

/// Busy-period areas against their closed forms: the stationary mean area
/// and `E J(x)` on the `x` grid within 5%, and `E e^{−γ·area}` on the `γ`
/// grid within 3 CI half-widths of the Airy transforms.
pub fn busy_period_suite(
    params: &QueueParams<f64>,
    sim: &SimConfig,
    n: u64,
    runner: &Runner,
) -> Result<BusySuiteReport> {
    busy_period_suite_with(params, sim, n, &BusyGrids::default(), runner)
}

pub fn busy_period_suite_with(
    params: &QueueParams<f64>,
    sim: &SimConfig,
    n: u64,
    grids: &BusyGrids,
    runner: &Runner,
) -> Result<BusySuiteReport> {
    if grids.gamma_grid.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidGrid("transform arguments must be positive".into()));
    }
    let level = runner.level();
    let mut checks = Vec::new();
    let mut censored = 0;
    // family 0: stationary start, family j+1: start at x_grid[j]
    let starts: Vec<Option<f64>> = std::iter::once(None).chain(grids.x_grid.iter().map(|&x| Some(x))).collect();
    for (family, start) in starts.iter().enumerate() {
        let t0 = Instant::now();
        let acc: BusyAcc = runner.run(n, |i, acc: &mut BusyAcc| {
            let mut rng = stream(sim.seed, family as u64 * FAMILY_STRIDE + sim.stream_index + i);
            let x = match start {
                Some(x) => *x,
                None => crate::sim::sample_stationary_q0(params, &mut rng),
            };
            match sample_first_passage(params, x, sim, &mut rng) {
                Ok(s) => {
                    acc.area.push(s.area);
                    if acc.transforms.is_empty() {
                        acc.transforms.resize_with(grids.gamma_grid.len(), MeanAcc::default);
                    }
                    for (t, g) in acc.transforms.iter_mut().zip(&grids.gamma_grid) {
                        t.push((-g * s.area).exp());
                    }
                    Ok(())
                }
                Err(Error::HorizonExceeded { .. }) => {
                    acc.censored += 1;
                    Ok(())
                }
                Err(e) => Err(e),
            }
        })?;
        let wall = t0.elapsed().as_secs_f64();
        censored += acc.censored;
        let area = mean_report(&acc.area, level, sim.seed, wall)?;
        let empty = MeanAcc::default();
        match start {
            None => {
                checks.push(TargetCheck::new(
                    "mean stationary busy area",
                    mean_stationary_area(params),
                    Tolerance::Relative(0.05),
                    area,
                ));
                for (j, &g) in grids.gamma_grid.iter().enumerate() {
                    let r = mean_report(acc.transforms.get(j).unwrap_or(&empty), level, sim.seed, wall)?;
                    checks.push(TargetCheck::new(
                        format!("stationary transform gamma={g}"),
                        stationary_lt(g, params)?,
                        Tolerance::CiMultiple(3.0),
                        r,
                    ));
                }
            }
            Some(x) => {
                checks.push(TargetCheck::new(
                    format!("mean J(x={x})"),
                    mean_transient_area(*x, params)?,
                    Tolerance::Relative(0.05),
                    area,
                ));
                for (j, &g) in grids.gamma_grid.iter().enumerate() {
                    let r = mean_report(acc.transforms.get(j).unwrap_or(&empty), level, sim.seed, wall)?;
                    let reference = if *x == 0.0 { 1.0 } else { transient_lt(g, *x, params)? };
                    checks.push(TargetCheck::new(
                        format!("transient transform gamma={g} x={x}"),
                        reference,
                        Tolerance::CiMultiple(3.0),
                        r,
                    ));
                }
            }
        }
    }
    Ok(BusySuiteReport { checks, censored })
}

/// Mean first-passage time to zero from level `x` over `n` replications.
pub fn mean_hitting_time(
    params: &QueueParams<f64>,
    x: f64,
    sim: &SimConfig,
    n: u64,
    runner: &Runner,
) -> Result<(EstimatorReport, u64)> {
    let t0 = Instant::now();
    let (acc, censored): (MeanAcc, u64) = runner.run(n, |i, acc: &mut (MeanAcc, u64)| {
        let mut rng = stream(sim.seed, sim.stream_index + i);
        match sample_first_passage(params, x, sim, &mut rng) {
            Ok(s) => acc.0.push(s.tau),
            Err(Error::HorizonExceeded { .. }) => acc.1 += 1,
            Err(e) => return Err(e),
        }
        Ok(())
    })?;
    Ok((mean_report(&acc, runner.level(), sim.seed, t0.elapsed().as_secs_f64())?, censored))
}

// ---------------------------------------------------------------------------
// experiment files

/// Grids and shape parameters of an experiment; which fields are needed
/// depends on the regime.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Design {
    #[serde(default)]
    pub u_grid: Vec<f64>,
    /// Area scale `M`.
    #[serde(default)]
    pub m: Option<f64>,
    /// `T` in `T(u) = T√u` (intermediate) or the horizon (scaling).
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Exponent of `T(u) = u^exponent` (short and long).
    #[serde(default)]
    pub exponent: Option<f64>,
    #[serde(default)]
    pub x_grid: Vec<f64>,
    #[serde(default)]
    pub gamma_grid: Vec<f64>,
    #[serde(default)]
    pub n_superpose: Vec<usize>,
}

/// A target compared with the estimate of the same label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub label: String,
    pub reference: f64,
    pub tolerance: Tolerance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub name: String,
    pub regime: Regime,
    pub params: QueueParams<f64>,
    pub sim: SimConfig,
    pub n: u64,
    #[serde(default)]
    pub design: Design,
    #[serde(default)]
    pub targets: Vec<Target>,
    #[serde(default)]
    pub confidence: Option<f64>,
}

/// One labelled estimate of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEstimate {
    pub label: String,
    pub report: EstimatorReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub regime: Regime,
    pub threads: usize,
    pub estimates: Vec<LabeledEstimate>,
    pub checks: Vec<TargetCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<RegimeTable>,
    pub passed: bool,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `label,estimate,ci_low,ci_high,n,reference` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["label", "estimate", "ci_low", "ci_high", "n", "reference"])?;
        for e in &self.estimates {
            wtr.write_record([
                e.label.clone(),
                fmt_real(e.report.estimate),
                fmt_real(e.report.ci_low),
                fmt_real(e.report.ci_high),
                e.report.n_replications.to_string(),
                e.reference.map(fmt_real).unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn need<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidConfig(format!("experiment design is missing `{what}`")))
}

impl Experiment {
    pub fn from_json(s: &str) -> Result<Self> {
        let e: Experiment = serde_json::from_str(s)?;
        e.sim.validate()?;
        if e.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        Ok(e)
    }

    pub fn tail_regime(&self) -> Result<Option<TailRegime>> {
        let d = &self.design;
        Ok(match self.regime {
            Regime::Short => Some(TailRegime::Short { coef: 1.0, exponent: d.exponent.unwrap_or(1.0 / 3.0) }),
            Regime::Intermediate => {
                Some(TailRegime::Intermediate { m: need(d.m, "m")?, horizon: need(d.horizon, "horizon")? })
            }
            Regime::Long => Some(TailRegime::Long { m: need(d.m, "m")?, exponent: d.exponent.unwrap_or(0.75) }),
            Regime::BusyPeriod | Regime::Scaling => None,
        })
    }

    /// Runs the experiment with `runner`, whose confidence level is
    /// replaced by the experiment's when one is given.
    pub fn run(&self, threads: Option<usize>) -> Result<ExperimentReport> {
        let mut runner = Runner::new(threads)?;
        if let Some(level) = self.confidence {
            runner = runner.with_level(level)?;
        }
        let mut estimates = Vec::new();
        let mut table = None;
        let mut checks = Vec::new();
        match self.regime {
            Regime::Short | Regime::Intermediate | Regime::Long => {
                let regime = self.tail_regime()?.expect("tail regimes have a design");
                let t = regime_study(&self.params, regime, &self.design.u_grid, &self.sim, self.n, &runner)?;
                for (row, est) in t.rows.iter().zip(tail_grid_reports(&t, &runner, self.sim.seed)?) {
                    estimates.push(LabeledEstimate { label: format!("pi(u={})", row.u), report: est, reference: None });
                }
                table = Some(t);
            }
            Regime::BusyPeriod => {
                let d = &self.design;
                let grids = BusyGrids {
                    x_grid: if d.x_grid.is_empty() { BusyGrids::default().x_grid } else { d.x_grid.clone() },
                    gamma_grid: if d.gamma_grid.is_empty() {
                        BusyGrids::default().gamma_grid
                    } else {
                        d.gamma_grid.clone()
                    },
                };
                let r = busy_period_suite_with(&self.params, &self.sim, self.n, &grids, &runner)?;
                for c in &r.checks {
                    estimates.push(LabeledEstimate {
                        label: c.label.clone(),
                        report: c.report.clone(),
                        reference: Some(c.reference),
                    });
                }
                checks.extend(r.checks);
            }
            Regime::Scaling => {
                let d = &self.design;
                let horizon = need(d.horizon, "horizon")?;
                let m = need(d.m, "m")?;
                let ns = if d.n_superpose.is_empty() { vec![1] } else { d.n_superpose.clone() };
                for n_sup in ns {
                    let r = scaling_check(&self.params, horizon, m, n_sup, &self.sim, self.n, &runner)?;
                    estimates.push(LabeledEstimate {
                        label: format!("superposed(n={n_sup})"),
                        report: r.superposed.clone(),
                        reference: None,
                    });
                    estimates.push(LabeledEstimate {
                        label: format!("stretched(n={n_sup})"),
                        report: r.stretched.clone(),
                        reference: None,
                    });
                    let z = z_for_level(runner.level())?;
                    let gap = (r.superposed.estimate - r.stretched.estimate).abs();
                    // overlap of the two intervals expressed as a CI multiple
                    let combined = EstimatorReport {
                        estimate: gap,
                        std_error: (r.superposed.half_width() + r.stretched.half_width()) / z,
                        ci_low: gap - r.superposed.half_width() - r.stretched.half_width(),
                        ci_high: gap + r.superposed.half_width() + r.stretched.half_width(),
                        ..r.superposed.clone()
                    };
                    let mut check =
                        TargetCheck::new(format!("overlap(n={n_sup})"), 0.0, Tolerance::CiMultiple(1.0), combined);
                    check.passed = r.overlap();
                    checks.push(check);
                }
            }
        }
        for t in &self.targets {
            let e = estimates
                .iter()
                .find(|e| e.label == t.label)
                .ok_or_else(|| Error::InvalidConfig(format!("no estimate labelled `{}`", t.label)))?;
            checks.push(TargetCheck::new(t.label.clone(), t.reference, t.tolerance, e.report.clone()));
        }
        let passed = checks.iter().all(|c| c.passed);
        Ok(ExperimentReport {
            name: self.name.clone(),
            regime: self.regime,
            threads: runner.threads(),
            estimates,
            checks,
            table,
            passed,
        })
    }
}

fn tail_grid_reports(t: &RegimeTable, runner: &Runner, seed: u64) -> Result<Vec<EstimatorReport>> {
    t.rows.iter().map(|r| proportion_report(r.hits, r.n, runner.level(), seed, 0.0)).collect()
}
