//! Statistical checks of the workload simulator against stationary and
//! first-passage laws.

use rbm_area::harness::{
    busy_period_suite_with, ks_p_value, ks_statistic, mean_report, sample_marginal, BusyGrids, MeanAcc, Runner,
};
use rbm_area::sim::{decompose_cycles, sample_stationary_q0, simulate_trace};
use rbm_area::{QueueParams, SimConfig};

fn unit() -> QueueParams<f64> {
    QueueParams::new(1.0).unwrap()
}

fn runner() -> Runner {
    Runner::new(None).unwrap()
}

fn cfg(h: f64, horizon: f64, seed: u64) -> SimConfig {
    SimConfig { h, horizon, seed, ..Default::default() }
}

#[test]
fn long_run_tail_at_one() {
    // batch means over one long stationary path
    let p = unit();
    let sim = cfg(0.01, 20_000.0, 11);
    let q0 = sample_stationary_q0(&p, &mut sim.with_stream(u64::MAX).rng());
    let trace = simulate_trace(&p, &sim, q0).unwrap();
    let per_batch = 10_000;
    let mut acc = MeanAcc::default();
    for batch in trace.grid.values()[1..].chunks_exact(per_batch) {
        acc.push(batch.iter().filter(|&&q| q > 1.0).count() as f64 / per_batch as f64);
    }
    let r = mean_report(&acc, 0.95, 11, 0.0).unwrap();
    let e2 = (-2.0f64).exp();
    assert!(r.within_half_widths(e2, 3.0), "{} +- {} vs {e2}", r.estimate, r.half_width());
}

#[test]
fn mean_hitting_time_from_one() {
    let p = unit();
    let n = 100_000;
    let acc: MeanAcc = runner()
        .run(n, |i, acc: &mut MeanAcc| {
            let t = simulate_trace(&p, &cfg(0.02, 25.0, 12).with_stream(i), 1.0)?;
            acc.push(t.hit_zero_at.expect("hit well before the horizon"));
            Ok(())
        })
        .unwrap();
    let r = mean_report(&acc, 0.95, 12, 0.0).unwrap();
    assert!(r.within_half_widths(1.0, 3.0), "{} +- {}", r.estimate, r.half_width());
}

#[test]
fn stationary_area_mean() {
    let p = unit();
    let horizon = 2.0;
    let acc: MeanAcc = runner()
        .run(100_000, |i, acc: &mut MeanAcc| {
            let sim = cfg(0.01, horizon, 13).with_stream(i);
            let mut rng = sim.rng();
            let q0 = sample_stationary_q0(&p, &mut rng);
            let t = simulate_trace(&p, &sim.with_stream(i + (1 << 40)), q0)?;
            acc.push(t.area);
            Ok(())
        })
        .unwrap();
    let r = mean_report(&acc, 0.95, 13, 0.0).unwrap();
    assert!(r.within_half_widths(horizon * p.stationary_mean(), 3.0), "{} +- {}", r.estimate, r.half_width());
}

#[test]
fn busy_areas_from_stationary_and_fixed_start() {
    let sim = SimConfig { h: 1e-3, horizon: 1.0, seed: 14, ..Default::default() };
    let grids = BusyGrids { x_grid: vec![1.0], gamma_grid: vec![1.0] };
    let rep = busy_period_suite_with(&unit(), &sim, 100_000, &grids, &runner()).unwrap();
    for label in ["mean stationary busy area", "mean J(x=1)"] {
        let c = rep.checks.iter().find(|c| c.label == label).unwrap();
        let rel = (c.report.estimate - c.reference).abs() / c.reference;
        assert!(rel <= 0.05, "{label}: {} vs {}", c.report.estimate, c.reference);
    }
}

#[test]
fn cycle_lengths_have_mean_delta_over_c() {
    let p = unit();
    let delta = 0.25;
    let mut acc = MeanAcc::default();
    for k in 0..4 {
        let sim = cfg(1e-3, 1_000.0, 15).with_stream(k);
        let trace = simulate_trace(&p, &sim, 0.0).unwrap();
        for c in decompose_cycles(&trace, delta).unwrap() {
            acc.push(c.xi);
        }
    }
    assert!(acc.n > 200, "only {} cycles", acc.n);
    let r = mean_report(&acc, 0.95, 15, 0.0).unwrap();
    assert!(r.within_half_widths(delta / p.c(), 3.0), "{} +- {} over {}", r.estimate, r.half_width(), acc.n);
}

#[test]
fn exact_mode_marginal_passes_ks() {
    let p = unit();
    let mut xs = sample_marginal(&p, &cfg(0.05, 1.0, 16), 20_000, 1.0, &runner()).unwrap();
    let d = ks_statistic(&mut xs, |x| 1.0 - (-2.0 * x).exp());
    assert!(ks_p_value(d, xs.len()) >= 0.01, "D = {d}");
}

#[test]
fn euler_hitting_bias_shrinks_with_bridge_and_step() {
    let p = unit();
    let bias = |h: f64, bridge: bool| {
        let acc: MeanAcc = runner()
            .run(20_000, |i, acc: &mut MeanAcc| {
                let sim = SimConfig {
                    h,
                    horizon: 40.0,
                    seed: 17,
                    use_exact_step: false,
                    use_bridge_correction: bridge,
                    ..Default::default()
                };
                let t = simulate_trace(&p, &sim.with_stream(i), 1.0)?;
                acc.push(t.hit_zero_at.unwrap_or(40.0));
                Ok(())
            })
            .unwrap();
        acc.mean() - 1.0
    };
    let coarse_plain = bias(0.1, false);
    let coarse_bridge = bias(0.1, true);
    let fine_plain = bias(0.01, false);
    // a missed crossing inside a step only delays the hit
    assert!(coarse_plain > 0.05, "{coarse_plain}");
    assert!(coarse_bridge.abs() < coarse_plain, "{coarse_bridge} vs {coarse_plain}");
    assert!(fine_plain < coarse_plain, "{fine_plain} vs {coarse_plain}");
}
