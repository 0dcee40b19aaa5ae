//! Sample paths of the reflected workload `Q(t) = sup_{s≤t}(X(t) − X(s))`,
//! `X(t) = B(t) − ct`, on a uniform grid.
//!
//! Two stepping schemes are available. The Lindley/Euler step
//! `max(q + ΔX, 0)` reflects only at grid times and so overstates the
//! workload by `O(√h)`. The exact step uses the fact that over one step
//! `Q(t+h) = max(Q(t) + W, M)` where `W` is the increment of `X` and `M` the
//! running maximum of the time-reversed increment path; given `W = w`,
//! `P(M ≥ m | w) = exp(−2m(m − w)/(σ²h))` for `m ≥ max(w, 0)`, so `M` is one
//! inverse-CDF draw. Grid marginals are then exact, and `M > Q(t) + W` says
//! exactly whether the path touched zero inside the step.
//!
//! Within a busy period no reflection occurs, so first-passage samplers run
//! the free process `x + B(t) − ct` and use the Brownian-bridge crossing
//! probability `exp(−2·q_k·q_{k+1}/h)` between positive grid values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CycleRecord, GridPath, QueueParams, WorkloadTrace};
use crate::rng::{stream, NoiseSource, StreamRng};

/// Bridge crossing probabilities below `exp(-50)` are treated as zero.
const BRIDGE_ARG_CUTOFF: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub h: f64,
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stream_index: u64,
    #[serde(default = "default_true")]
    pub use_exact_step: bool,
    #[serde(default = "default_true")]
    pub use_bridge_correction: bool,
    /// Censoring time for first-passage samplers; `10⁴/c` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit_cap: Option<f64>,
}

fn default_true() -> bool {
    true
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            h: 1e-3,
            horizon: 1.0,
            seed: 0,
            stream_index: 0,
            use_exact_step: true,
            use_bridge_correction: true,
            hit_cap: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidConfig(format!("step h must be positive, got {}", self.h)));
        }
        if !(self.horizon >= self.h) || !self.horizon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "horizon {} must be finite and at least h = {}",
                self.horizon, self.h
            )));
        }
        if let Some(cap) = self.hit_cap {
            if !(cap > 0.0) {
                return Err(Error::InvalidConfig(format!("hit cap must be positive, got {cap}")));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Number of steps covering the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.h).round().max(1.0) as usize
    }

    pub fn rng(&self) -> StreamRng {
        stream(self.seed, self.stream_index)
    }

    pub fn with_stream(&self, stream_index: u64) -> Self {
        Self { stream_index, ..self.clone() }
    }

    pub fn hit_cap_for(&self, params: &QueueParams<f64>) -> f64 {
        self.hit_cap.unwrap_or(1e4 / params.c())
    }
}

/// Inverse CDF of `Exp(2c)`: `−ln(U)/(2c)` for `U ∈ (0, 1]`.
#[inline]
pub fn stationary_from_uniform(u: f64, params: &QueueParams<f64>) -> f64 {
    // -0.0 for U = 1 would print oddly
    (-u.ln() / params.stationary_rate()).max(0.0)
}

/// One draw of the stationary workload `Q(0) ~ Exp(2c)`.
#[inline]
pub fn sample_stationary_q0<N: NoiseSource + ?Sized>(params: &QueueParams<f64>, noise: &mut N) -> f64 {
    stationary_from_uniform(noise.uniform_open(), params)
}

/// Result of advancing the reflected workload by one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next: f64,
    /// Fraction of the step after which the path first touched zero, if it
    /// did during this step.
    pub hit_fraction: Option<f64>,
}

/// Precomputed one-step kernel for a driving Brownian motion with variance
/// `σ²` per unit time (the average of `drivers` independent standard
/// motions has `σ² = 1/drivers`) and drain `c`.
#[derive(Debug, Clone, Copy)]
pub struct Stepper {
    h: f64,
    drift: f64,
    sd: f64,
    bridge_var: f64,
    drivers: usize,
    exact: bool,
    bridge: bool,
}

impl Stepper {
    pub fn new(params: &QueueParams<f64>, h: f64, exact: bool, bridge: bool) -> Self {
        Self::superposed(params, h, 1, exact, bridge)
    }

    /// Kernel for `Q⁽ⁿ⁾`, the queue fed by the average of `drivers`
    /// independent Brownian motions. Each step draws all `drivers` normal
    /// increments and averages them.
    pub fn superposed(params: &QueueParams<f64>, h: f64, drivers: usize, exact: bool, bridge: bool) -> Self {
        let drivers = drivers.max(1);
        let n = drivers as f64;
        Self { h, drift: -params.c() * h, sd: h.sqrt(), bridge_var: h / n, drivers, exact, bridge }
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    fn increment<N: NoiseSource + ?Sized>(&self, noise: &mut N) -> f64 {
        if self.drivers == 1 {
            self.drift + self.sd * noise.standard_normal()
        } else {
            let mut s = 0.0;
            for _ in 0..self.drivers {
                s += noise.standard_normal();
            }
            self.drift + self.sd * s / self.drivers as f64
        }
    }

    /// Advances the workload from `q`, reporting whether zero was touched.
    #[inline]
    pub fn step<N: NoiseSource + ?Sized>(&self, q: f64, noise: &mut N) -> Step {
        let w = self.increment(noise);
        let free = q + w;
        if self.exact {
            let e = noise.exponential();
            let m = 0.5 * (w + (w * w + 2.0 * self.bridge_var * e).sqrt());
            if m >= free {
                let fraction = if m > w { (q / (m - w)).min(1.0) } else { 0.0 };
                Step { next: m, hit_fraction: Some(fraction) }
            } else {
                Step { next: free, hit_fraction: None }
            }
        } else if free <= 0.0 {
            let fraction = if q > 0.0 { q / (q - free) } else { 0.0 };
            Step { next: 0.0, hit_fraction: Some(fraction) }
        } else if self.bridge && q > 0.0 {
            let arg = 2.0 * q * free / self.bridge_var;
            if arg < BRIDGE_ARG_CUTOFF && noise.uniform_open() < (-arg).exp() {
                Step { next: free, hit_fraction: Some(0.5) }
            } else {
                Step { next: free, hit_fraction: None }
            }
        } else {
            Step { next: free, hit_fraction: None }
        }
    }

    /// Advances the workload without hit bookkeeping.
    #[inline]
    pub fn advance<N: NoiseSource + ?Sized>(&self, q: f64, noise: &mut N) -> f64 {
        let w = self.increment(noise);
        if self.exact {
            let e = noise.exponential();
            let m = 0.5 * (w + (w * w + 2.0 * self.bridge_var * e).sqrt());
            (q + w).max(m)
        } else {
            (q + w).max(0.0)
        }
    }
}

/// One step of the reflected workload from `q`.
///
/// Euler mode: `max(q + ΔB − ch, 0)`. Exact mode: `max(q + w, m)` with the
/// running maximum `m` drawn from its conditional law given `w`.
pub fn step_workload<N: NoiseSource + ?Sized>(
    q: f64,
    params: &QueueParams<f64>,
    h: f64,
    noise: &mut N,
    exact: bool,
) -> f64 {
    Stepper::new(params, h, exact, false).advance(q, noise)
}

/// Simulates `Q` on `[0, horizon]` from `q0` using the configured stream.
pub fn simulate_trace(params: &QueueParams<f64>, config: &SimConfig, q0: f64) -> Result<WorkloadTrace> {
    simulate_trace_with(params, config, q0, &mut config.rng())
}

/// As [`simulate_trace`], drawing from an explicit noise source.
pub fn simulate_trace_with<N: NoiseSource + ?Sized>(
    params: &QueueParams<f64>,
    config: &SimConfig,
    q0: f64,
    noise: &mut N,
) -> Result<WorkloadTrace> {
    config.validate()?;
    if !(q0 >= 0.0) {
        return Err(Error::domain(format!("initial workload must be nonnegative, got {q0}")));
    }
    let n = config.steps();
    let stepper = Stepper::new(params, config.h, config.use_exact_step, config.use_bridge_correction);
    let mut values = Vec::with_capacity(n + 1);
    values.push(q0);
    let mut q = q0;
    let mut hit_zero_at = None;
    for k in 0..n {
        let step = stepper.step(q, noise);
        if hit_zero_at.is_none() && q0 > 0.0 {
            if let Some(frac) = step.hit_fraction {
                hit_zero_at = Some((k as f64 + frac) * config.h);
            }
        }
        q = step.next;
        values.push(q);
    }
    let grid = GridPath::new(0.0, config.h, values)?;
    WorkloadTrace::from_grid(*params, grid, hit_zero_at)
}

/// Hitting time of zero and the area swept until then.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstPassageSample {
    pub tau: f64,
    pub area: f64,
}

/// Runs the free process `x + B(t) − ct` until it first hits zero and
/// returns `(τ(x), J(x))`, the hitting time and `∫₀^τ (x + B − ct) dt`.
///
/// The final partial step is cut at the linearly interpolated zero for a
/// sign change, or at its midpoint for a bridge-detected crossing.
pub fn sample_first_passage<N: NoiseSource + ?Sized>(
    params: &QueueParams<f64>,
    x: f64,
    config: &SimConfig,
    noise: &mut N,
) -> Result<FirstPassageSample> {
    if !(x >= 0.0) {
        return Err(Error::domain(format!("start level must be nonnegative, got {x}")));
    }
    if x == 0.0 {
        return Ok(FirstPassageSample { tau: 0.0, area: 0.0 });
    }
    let h = config.h;
    let cap = config.hit_cap_for(params);
    let max_steps = (cap / h).ceil() as u64;
    let drift = -params.c() * h;
    let sd = h.sqrt();
    let inv_h = 1.0 / h;
    let mut q = x;
    let mut area = 0.0;
    for k in 0..max_steps {
        let t = k as f64 * h;
        let next = q + drift + sd * noise.standard_normal();
        if next <= 0.0 {
            let frac = q / (q - next);
            return Ok(FirstPassageSample { tau: t + frac * h, area: area + 0.5 * q * frac * h });
        }
        if config.use_bridge_correction {
            let arg = 2.0 * q * next * inv_h;
            if arg < BRIDGE_ARG_CUTOFF && noise.uniform_open() < (-arg).exp() {
                return Ok(FirstPassageSample { tau: t + 0.5 * h, area: area + 0.25 * q * h });
            }
        }
        area += 0.5 * (q + next) * h;
        q = next;
    }
    Err(Error::HorizonExceeded { cap })
}

/// Residual busy period seen from stationarity: draws `Q(0) ~ Exp(2c)` and
/// returns `(τ₀, ∫₀^{τ₀} Q dt)`.
pub fn sample_residual_busy_area(params: &QueueParams<f64>, config: &SimConfig) -> Result<FirstPassageSample> {
    sample_residual_busy_area_with(params, config, &mut config.rng())
}

pub fn sample_residual_busy_area_with<N: NoiseSource + ?Sized>(
    params: &QueueParams<f64>,
    config: &SimConfig,
    noise: &mut N,
) -> Result<FirstPassageSample> {
    let q0 = sample_stationary_q0(params, noise);
    sample_first_passage(params, q0, config, noise)
}

/// Splits a trace into δ-cycles: `σᵢ` is the first grid time after
/// `τᵢ₋₁` with `Q ≥ 2δ`, `τᵢ` the first grid time after `σᵢ` with
/// `Q ≤ δ`. Only completed cycles are returned.
///
/// `τ₀` is `0` when the trace starts empty and its first hit of zero
/// otherwise; a trace that starts busy and never empties has no cycles.
pub fn decompose_cycles(trace: &WorkloadTrace, delta: f64) -> Result<Vec<CycleRecord>> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("delta must be positive, got {delta}")));
    }
    let grid = &trace.grid;
    let v = grid.values();
    let h = grid.h();
    let tau0 = if v[0] == 0.0 {
        grid.t0()
    } else {
        match trace.hit_zero_at {
            Some(t) => t,
            None => return Ok(Vec::new()),
        }
    };
    // first grid index strictly after tau0
    let mut k = ((tau0 - grid.t0()) / h).floor() as usize + 1;
    let mut out = Vec::new();
    let up = 2.0 * delta;
    while k < v.len() {
        let Some(s) = (k..v.len()).find(|&i| v[i] >= up) else { break };
        let Some(e) = (s + 1..v.len()).find(|&i| v[i] <= delta) else { break };
        let inner: f64 = v[s + 1..e].iter().sum();
        let area = h * (0.5 * (v[s] + v[e]) + inner);
        let (sigma, tau) = (grid.time(s), grid.time(e));
        out.push(CycleRecord { sigma, tau, h_area: area, xi: tau - sigma });
        k = e + 1;
    }
    Ok(out)
}
