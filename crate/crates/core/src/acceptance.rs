//! The twelve acceptance criteria, each a self-contained check with a fixed
//! seed. [`Scale::Full`] runs the stated sample sizes; [`Scale::Quick`]
//! divides every Monte Carlo sample size by ten (tolerances unchanged) for
//! smoke runs.

use std::fmt;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    lemma1_exact_probability, lemma1_ratio_gap, minimize_psi_closed_form, phi_tm, theorem1_asymptotic, xi_density_with,
    DensityDomain,
};
use crate::error::Result;
use crate::harness::{
    busy_period_suite, estimate_pi, largest_feasible_u, mean_hitting_time, regime_study, scaling_check,
    stationary_check, BusySuiteReport, HorizonRule, Runner, TailRegime,
};
use crate::laplace::{mean_stationary_area, stationary_lt, stationary_lt_routes};
use crate::model::{fmt_sig, Branch, QueueParams};
use crate::quadrature::{integrate, QuadOptions};
use crate::rng::{stream, NoiseSource};
use crate::sim::SimConfig;
use crate::special::{airy_ai, airy_ai_asymptotic, airy_cosine_oracle};
use crate::variational::{minimize_psi_numeric, most_likely_path, rate_functional};

pub const DEFAULT_SEED: u64 = 20_130_901;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    Full,
    Quick,
}

impl Scale {
    fn n(&self, full: u64) -> u64 {
        match self {
            Scale::Full => full,
            Scale::Quick => (full / 10).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} {} ({:.1}s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.seconds,
            self.detail
        )
    }
}

pub const CRITERIA: [(u8, &str); 12] = [
    (1, "stationary law"),
    (2, "mean residual busy area"),
    (3, "mean busy area from a fixed level"),
    (4, "numeric psi minimizer vs closed form"),
    (5, "most likely path rate identity"),
    (6, "short-timescale exact probability"),
    (7, "short-timescale tail estimate"),
    (8, "many-sources scaling identity"),
    (9, "Airy certification"),
    (10, "stationary transform consistency"),
    (11, "intermediate and long regime trends"),
    (12, "cycle length density"),
];

/// Runs criteria with shared state (the busy-period suite feeds 2, 3 and 10).
pub struct Suite {
    scale: Scale,
    seed: u64,
    runner: Runner,
    busy: Option<BusySuiteReport>,
}

fn p(c: f64) -> QueueParams<f64> {
    QueueParams::new(c).expect("positive drain")
}

fn fmt_g(x: f64) -> String {
    fmt_sig(x, 10)
}

impl Suite {
    pub fn new(scale: Scale, seed: u64, threads: Option<usize>) -> Result<Self> {
        Ok(Self { scale, seed, runner: Runner::new(threads)?, busy: None })
    }

    pub fn threads(&self) -> usize {
        self.runner.threads()
    }

    pub fn run_all(&mut self, mut on_outcome: impl FnMut(&Outcome)) -> Vec<Outcome> {
        CRITERIA
            .iter()
            .map(|&(id, _)| {
                let o = self.run(id);
                on_outcome(&o);
                o
            })
            .collect()
    }

    /// Runs one criterion; an internal error counts as a failure.
    pub fn run(&mut self, id: u8) -> Outcome {
        let name = CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1).unwrap_or("unknown").to_string();
        let start = Instant::now();
        let res = match id {
            1 => self.c1(),
            2 => self.c2(),
            3 => self.c3(),
            4 => self.c4(),
            5 => self.c5(),
            6 => self.c6(),
            7 => self.c7(),
            8 => self.c8(),
            9 => self.c9(),
            10 => self.c10(),
            11 => self.c11(),
            12 => self.c12(),
            _ => Ok((false, format!("no criterion {id}"))),
        };
        let (passed, detail) = res.unwrap_or_else(|e| (false, format!("error: {e}")));
        Outcome { id, name, passed, detail, seconds: start.elapsed().as_secs_f64() }
    }

    fn sim(&self, h: f64) -> SimConfig {
        SimConfig { h, horizon: 1.0, seed: self.seed, ..Default::default() }
    }

    fn c1(&mut self) -> Result<(bool, String)> {
        let n = self.scale.n(100_000);
        let r = stationary_check(&p(1.0), &self.sim(0.01), n, 1.0, &self.runner)?;
        let e2 = (-2.0f64).exp();
        let ks_ok = r.ks_p_value >= 0.01;
        let tail_ok = r.tail_at_one.within_half_widths(e2, 3.0);
        Ok((
            ks_ok && tail_ok,
            format!(
                "n={n}, KS D={:.3e} p={:.4} (need >= 0.01); P(Q>1)={} CI [{}, {}] vs e^-2={} within 3 half-widths: {}",
                r.ks_statistic,
                r.ks_p_value,
                fmt_g(r.tail_at_one.estimate),
                fmt_g(r.tail_at_one.ci_low),
                fmt_g(r.tail_at_one.ci_high),
                fmt_g(e2),
                tail_ok
            ),
        ))
    }

    fn busy(&mut self) -> Result<&BusySuiteReport> {
        if self.busy.is_none() {
            let sim = SimConfig { use_bridge_correction: true, ..self.sim(1e-4) };
            self.busy = Some(busy_period_suite(&p(1.0), &sim, self.scale.n(100_000), &self.runner)?);
        }
        Ok(self.busy.as_ref().expect("just filled"))
    }

    fn c2(&mut self) -> Result<(bool, String)> {
        let b = self.busy()?;
        let c = b.checks.iter().find(|c| c.label == "mean stationary busy area").expect("suite emits it");
        Ok((
            c.passed,
            format!(
                "n={}, h=1e-4, mean area {} vs {} (rel err {:.4}, need <= 0.05), censored {}",
                c.report.n_replications,
                fmt_g(c.report.estimate),
                fmt_g(c.reference),
                (c.report.estimate - c.reference).abs() / c.reference,
                b.censored
            ),
        ))
    }

    fn c3(&mut self) -> Result<(bool, String)> {
        let b = self.busy()?;
        let mut parts = Vec::new();
        let mut ok = true;
        for c in b.checks.iter().filter(|c| c.label.starts_with("mean J")) {
            ok &= c.passed;
            parts.push(format!(
                "{} = {} vs {} (rel err {:.4})",
                c.label,
                fmt_g(c.report.estimate),
                fmt_g(c.reference),
                (c.report.estimate - c.reference).abs() / c.reference
            ));
        }
        Ok((ok && parts.len() == 3, format!("n={} each, need <= 0.05: {}", self.scale.n(100_000), parts.join("; "))))
    }

    fn c4(&mut self) -> Result<(bool, String)> {
        let mut rng = stream(self.seed, 4);
        let mut worst: f64 = 0.0;
        let mut branches = [0usize; 2];
        for _ in 0..100 {
            let c = rng.random_range(0.2..5.0);
            let t = rng.random_range(0.2..5.0);
            let m = rng.random_range(0.2..5.0);
            let params = p(c);
            let num = minimize_psi_numeric(t, m, &params, 1e-10)?;
            let exact = minimize_psi_closed_form(t, m, &params);
            worst = worst.max((num.value - exact.value).abs());
            branches[(exact.branch == Branch::Boundary) as usize] += 1;
        }
        Ok((
            worst <= 1e-7,
            format!(
                "100 triples ({} interior, {} boundary), max |value diff| = {:.3e} (need <= 1e-7)",
                branches[0], branches[1], worst
            ),
        ))
    }

    fn c5(&mut self) -> Result<(bool, String)> {
        let mut rng = stream(self.seed, 5);
        let mut worst: f64 = 0.0;
        let mut counts = [0usize; 2];
        // ten triples per branch
        while counts[0] + counts[1] < 20 {
            let c = rng.random_range(0.2..5.0);
            let t = rng.random_range(0.2..5.0);
            let m = rng.random_range(0.2..5.0);
            let params = p(c);
            let phi = phi_tm(t, m, &params);
            let k = (phi.branch == Branch::Boundary) as usize;
            if counts[k] == 10 {
                continue;
            }
            counts[k] += 1;
            let path = most_likely_path(t, m, &params, 100_000)?;
            let total = rate_functional(&path.grid) + 2.0 * path.a_star * c;
            worst = worst.max((total - phi.value).abs());
        }
        Ok((
            worst <= 1e-5,
            format!(
                "10 interior + 10 boundary triples, n_grid=1e5, max |rate + 2a*c - phi| = {worst:.3e} (need <= 1e-5)"
            ),
        ))
    }

    fn c6(&mut self) -> Result<(bool, String)> {
        let params = p(1.0);
        let (t, u) = (1.0f64, 0.5f64);
        let exact = lemma1_exact_probability(u, t, &params);
        let n = self.scale.n(1_000_000);
        let scale = t.powf(1.5) / 3f64.sqrt();
        let threshold = u + 0.5 * t * t;
        let hits: u64 = self.runner.run(n, |i, acc: &mut u64| {
            let mut r = stream(self.seed, (6 << 40) + i);
            let q0 = -r.uniform_open().ln() / params.stationary_rate();
            if t * q0 + scale * r.standard_normal() > threshold {
                *acc += 1;
            }
            Ok(())
        })?;
        let rep = crate::harness::proportion_report(hits, n, self.runner.level(), self.seed, 0.0)?;
        let mc_ok = rep.within_half_widths(exact, 3.0);
        let gaps: Vec<f64> = [10.0f64, 20.0, 40.0].iter().map(|&u| lemma1_ratio_gap(u, u.powf(0.3), &params)).collect();
        let toward_one = gaps.windows(2).all(|w| w[1].abs() < w[0].abs());
        let last = 1.0 + *gaps.last().expect("three ratios");
        let final_ok = (0.9..=1.1).contains(&last);
        Ok((
            mc_ok && toward_one && final_ok,
            format!(
                "exact {} vs MC {} CI [{}, {}] (n={n}) within 3 half-widths: {mc_ok}; exact/asymptotic - 1 at u=10,20,40: {:.4e}, {:.4e}, {:.4e} monotone toward 1: {toward_one}, final in [0.9, 1.1]: {final_ok}",
                fmt_g(exact),
                fmt_g(rep.estimate),
                fmt_g(rep.ci_low),
                fmt_g(rep.ci_high),
                gaps[0],
                gaps[1],
                gaps[2]
            ),
        ))
    }

    fn c7(&mut self) -> Result<(bool, String)> {
        let params = p(1.0);
        let u = 4.0f64;
        let rule = HorizonRule::Power { coef: 1.0, exponent: 1.0 / 3.0 };
        let n = self.scale.n(10_000_000);
        let e = estimate_pi(&params, rule, u, &self.sim(0.01), n, &self.runner)?;
        let target = theorem1_asymptotic(u, rule.horizon(u), &params);
        let ratio = e.report.estimate / target;
        Ok((
            (0.5..=2.0).contains(&ratio),
            format!(
                "n={n}, h=0.01, pi_hat={} (hits {}) vs asymptotic {} ratio {:.4} (need in [0.5, 2])",
                fmt_g(e.report.estimate),
                e.report.hits.unwrap_or(0),
                fmt_g(target),
                ratio
            ),
        ))
    }

    fn c8(&mut self) -> Result<(bool, String)> {
        let runner = Runner::new(Some(self.runner.threads()))?.with_level(0.99)?;
        let n = self.scale.n(1_000_000);
        let mut ok = true;
        let mut parts = Vec::new();
        for (k, m) in [(2usize, 0.5f64), (3, 0.3)] {
            let r = scaling_check(&p(1.0), 1.0, m, k, &self.sim(0.01), n, &runner)?;
            ok &= r.overlap();
            parts.push(format!(
                "n={k}, M={m}: superposed {} [{}, {}] vs stretched {} [{}, {}] overlap {}",
                fmt_g(r.superposed.estimate),
                fmt_g(r.superposed.ci_low),
                fmt_g(r.superposed.ci_high),
                fmt_g(r.stretched.estimate),
                fmt_g(r.stretched.ci_low),
                fmt_g(r.stretched.ci_high),
                r.overlap()
            ));
        }
        Ok((ok, format!("{n} reps per side, 99% CIs: {}", parts.join("; "))))
    }

    fn c9(&mut self) -> Result<(bool, String)> {
        let mut worst_abs: f64 = 0.0;
        for x in [0.0f64, 0.5, 1.0, 2.0, 4.0] {
            worst_abs = worst_abs.max((airy_ai(x)? - airy_cosine_oracle(x)).abs());
        }
        let mut worst_rel: f64 = 0.0;
        for x in [8.0f64, 10.0, 12.0, 15.0, 20.0, 30.0, 50.0, 100.0] {
            let a = airy_ai(x)?;
            worst_rel = worst_rel.max((airy_ai_asymptotic(x, 1)? - a).abs() / a);
        }
        Ok((
            worst_abs <= 1e-8 && worst_rel <= 1e-3,
            format!("max |Ai - oracle| on {{0,0.5,1,2,4}} = {worst_abs:.3e} (need <= 1e-8); max rel err of two-term form on x in [8,100] = {worst_rel:.3e} (need <= 1e-3)"),
        ))
    }

    fn c10(&mut self) -> Result<(bool, String)> {
        let mut worst: f64 = 0.0;
        for c in [0.5, 1.0, 2.0] {
            for g in [0.01, 0.1, 1.0, 10.0] {
                let (a, b) = stationary_lt_routes(g, &p(c))?;
                worst = worst.max((a - b).abs());
            }
        }
        let routes_ok = worst <= 1e-8;
        let mut slope_err: f64 = 0.0;
        for c in [0.5, 1.0, 2.0] {
            let params = p(c);
            let g = 1e-4;
            let slope = -(stationary_lt(g, &params)? - 1.0) / g;
            let target = mean_stationary_area(&params);
            slope_err = slope_err.max((slope - target).abs() / target);
        }
        let slope_ok = slope_err <= 0.01;
        let b = self.busy()?;
        let mc = b.checks.iter().find(|c| c.label == "stationary transform gamma=1").expect("suite emits it");
        Ok((
            routes_ok && slope_ok && mc.passed,
            format!(
                "max route gap {worst:.3e} (need <= 1e-8); max rel err of small-gamma slope vs 1/(2c^3) {slope_err:.3e} (need <= 0.01); MC E[exp(-area)] {} CI [{}, {}] vs {} within 3 half-widths: {}",
                fmt_g(mc.report.estimate),
                fmt_g(mc.report.ci_low),
                fmt_g(mc.report.ci_high),
                fmt_g(mc.reference),
                mc.passed
            ),
        ))
    }

    fn c11(&mut self) -> Result<(bool, String)> {
        let params = p(1.0);
        let n = self.scale.n(10_000_000);
        let sim = self.sim(0.2);
        let m = 0.2;
        let regimes = [
            ("intermediate T=2", TailRegime::Intermediate { m, horizon: 2.0 }, 0.25),
            ("long T(u)=u^0.75", TailRegime::Long { m, exponent: 0.75 }, 0.30),
        ];
        let mut ok = true;
        let mut parts = Vec::new();
        for (label, regime, tol) in regimes {
            let rate = regime.target_rate(&params).expect("tail regime with a rate");
            // largest u with n·exp(−φ√u) ≥ 20
            let root_max = (n as f64 / crate::harness::MIN_EXPECTED_HITS).ln() / rate;
            let mut grid: Vec<f64> =
                [6.0f64, 8.0, 10.0, 12.0, 14.0, 16.0].iter().filter(|&&r| r < root_max).map(|r| r * r).collect();
            grid.push(root_max * root_max * (1.0 - 1e-12));
            if let Some(u_max) = largest_feasible_u(&params, regime, &grid, n) {
                grid.retain(|&u| u <= u_max);
            }
            let table = regime_study(&params, regime, &grid, &sim, n, &self.runner)?;
            let last = table.last();
            let rel = (last.rate - rate).abs() / rate;
            let monotone = table.rate_increasing() || table.rows.windows(2).all(|w| w[1].rate < w[0].rate);
            let pass = rel <= tol && monotone;
            ok &= pass;
            let col: Vec<String> = table.rows.iter().map(|r| format!("{:.1}:{:.4}", r.u, r.rate)).collect();
            parts.push(format!(
                "{label}: u:rate [{}], target {:.4}, rel err at u={:.1} is {:.3} (need <= {tol}), monotone {monotone}",
                col.join(" "),
                rate,
                last.u,
                rel
            ));
        }
        Ok((ok, format!("n={n}, M={m}, h=0.2: {}", parts.join("; "))))
    }

    fn c12(&mut self) -> Result<(bool, String)> {
        let params = p(1.0);
        let delta = 1.0;
        let opts = QuadOptions { abs_tol: 1e-14, rel_tol: 1e-13, max_subdivisions: 2000 };
        let f = |t: f64| xi_density_with(t, delta, &params, DensityDomain::Extended).unwrap_or(f64::NAN);
        let mut mass = 0.0;
        for (a, b) in [(0.0, 1.0), (1.0, 10.0), (10.0, 100.0), (100.0, 400.0)] {
            mass += integrate(f, a, b, &opts)?.value;
        }
        let mass_ok = (mass - 1.0).abs() <= 1e-8;
        let n = self.scale.n(100_000);
        let sim = SimConfig { use_bridge_correction: true, ..self.sim(1e-4) };
        let (rep, censored) = mean_hitting_time(&params, delta, &sim, n, &self.runner)?;
        let target = delta / params.c();
        let mc_ok = rep.within_half_widths(target, 3.0) && censored == 0;
        Ok((
            mass_ok && mc_ok,
            format!(
                "density mass {mass:.15} (need |mass-1| <= 1e-8); mean tau(1) {} CI [{}, {}] vs {} within 3 half-widths: {mc_ok} (n={n}, h=1e-4)",
                fmt_g(rep.estimate),
                fmt_g(rep.ci_low),
                fmt_g(rep.ci_high),
                fmt_g(target)
            ),
        ))
    }
}

/// Runs every criterion and returns the outcomes in order.
pub fn run_all(
    scale: Scale,
    seed: u64,
    threads: Option<usize>,
    on_outcome: impl FnMut(&Outcome),
) -> Result<Vec<Outcome>> {
    let mut suite = Suite::new(scale, seed, threads)?;
    Ok(suite.run_all(on_outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_criteria_pass() {
        let mut s = Suite::new(Scale::Quick, DEFAULT_SEED, Some(1)).unwrap();
        for id in [4, 5, 9] {
            let o = s.run(id);
            assert!(o.passed, "{o}");
        }
    }

    #[test]
    fn unknown_criterion_fails() {
        let mut s = Suite::new(Scale::Quick, 1, Some(1)).unwrap();
        let o = s.run(99);
        assert!(!o.passed);
        assert!(o.to_string().contains("FAIL"));
    }
}
