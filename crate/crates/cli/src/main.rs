use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rbm_area::acceptance::{Scale, Suite, CRITERIA, DEFAULT_SEED};
use rbm_area::asymptotics::{evaluate_batch_csv, lemma1_exact_probability, phi_tm, theorem1_asymptotic};
use rbm_area::harness::{
    busy_period_suite_with, estimate_pi, scaling_check, BusyGrids, Experiment, HorizonRule, Runner,
};
use rbm_area::laplace::{transform_table, write_transform_csv, TransformKind};
use rbm_area::model::write_cycles_csv;
use rbm_area::sim::{decompose_cycles, sample_stationary_q0, simulate_trace};
use rbm_area::variational::most_likely_path;
use rbm_area::{Branch, QueueParams, SimConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "rbm-area",
    version,
    about = "Area under a Brownian storage workload: tails, paths, transforms and simulation"
)]
struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decay rate phi(T,M) with its minimizer, the short-timescale tail at (u,T), or a batch CSV.
    Asym(AsymArgs),
    /// Most likely path f* and its workload as CSV (columns r,f_star,q).
    Mlp(MlpArgs),
    /// Laplace transform of a busy-period area (JSON for one gamma, CSV gamma,lt otherwise).
    Laplace(LaplaceArgs),
    /// Monte Carlo estimate of P(area over [0,T] > u) from stationarity.
    SimTail(SimTailArgs),
    /// Monte Carlo busy-period areas against their closed forms; optional trace and cycle CSVs.
    SimBusy(SimBusyArgs),
    /// Both sides of the many-sources scaling identity.
    Scaling(ScalingArgs),
    /// Run a JSON experiment file (regime study, busy periods or scaling).
    Regime(RegimeArgs),
    /// Run the acceptance suite; exits nonzero if any criterion fails.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Drain {
    /// Drain rate c > 0.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    c: f64,
}

impl Drain {
    fn params(&self) -> rbm_area::Result<QueueParams<f64>> {
        QueueParams::new(self.c)
    }
}

#[derive(Args)]
struct SimArgs {
    /// Time step.
    #[arg(long, default_value_t = 0.01)]
    h: f64,
    /// Euler/Lindley stepping instead of the exact step.
    #[arg(long)]
    euler: bool,
    /// Disable the Brownian-bridge zero-crossing check.
    #[arg(long)]
    no_bridge: bool,
}

impl SimArgs {
    fn config(&self, seed: u64, horizon: f64) -> SimConfig {
        SimConfig {
            h: self.h,
            horizon,
            seed,
            use_exact_step: !self.euler,
            use_bridge_correction: !self.no_bridge,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct AsymArgs {
    #[command(flatten)]
    drain: Drain,
    /// Area level per sqrt(u) for the rate phi(T,M).
    #[arg(long = "M", short = 'M')]
    m: Option<f64>,
    /// Horizon T.
    #[arg(long = "T", short = 'T')]
    horizon: Option<f64>,
    /// Area level u for the short-timescale tail (needs --T, excludes --M).
    #[arg(long, conflicts_with = "m", allow_negative_numbers = true)]
    u: Option<f64>,
    /// CSV with header `u,T` or `T,M`; evaluated rows go to stdout or --out.
    #[arg(long, conflicts_with_all = ["m", "u", "horizon"])]
    batch: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MlpArgs {
    #[command(flatten)]
    drain: Drain,
    #[arg(long = "M", short = 'M')]
    m: f64,
    #[arg(long = "T", short = 'T')]
    horizon: f64,
    /// Grid points on [0,T].
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Output CSV (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LtMode {
    Stationary,
    Transient,
}

#[derive(Args)]
struct LaplaceArgs {
    #[command(flatten)]
    drain: Drain,
    /// Transform argument(s), comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    gamma: Vec<f64>,
    #[arg(long, value_enum, default_value_t = LtMode::Stationary)]
    mode: LtMode,
    /// Starting level for the transient transform.
    #[arg(long, required_if_eq("mode", "transient"))]
    x: Option<f64>,
    /// Write CSV here even for a single gamma.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimTailArgs {
    #[command(flatten)]
    drain: Drain,
    #[arg(long)]
    u: f64,
    #[arg(long = "T", short = 'T')]
    horizon: f64,
    /// Replications.
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args)]
struct SimBusyArgs {
    #[command(flatten)]
    drain: Drain,
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    /// Starting levels for mean J(x), comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    x: Vec<f64>,
    /// Transform arguments for the stationary busy area, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    gamma: Vec<f64>,
    #[command(flatten)]
    sim: SimArgs,
    /// Also write one stationary workload trace over this horizon to --trace-out.
    #[arg(long, requires = "trace_out")]
    trace_horizon: Option<f64>,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Excursion threshold for cycle decomposition of the trace (columns sigma,tau,H,xi).
    #[arg(long, requires_all = ["trace_horizon", "cycles_out"])]
    delta: Option<f64>,
    #[arg(long)]
    cycles_out: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    #[command(flatten)]
    drain: Drain,
    #[arg(long = "M", short = 'M')]
    m: f64,
    #[arg(long = "T", short = 'T', default_value_t = 1.0)]
    horizon: f64,
    /// Number of superposed sources.
    #[arg(long, default_value_t = 2)]
    n_superpose: usize,
    #[arg(long, default_value_t = 1_000_000)]
    n: u64,
    /// Confidence level of the compared intervals.
    #[arg(long, default_value_t = 0.99)]
    level: f64,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args)]
struct RegimeArgs {
    /// Experiment JSON file.
    experiment: PathBuf,
    /// Also write the estimates (or the trend table for tail regimes) as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Monte Carlo sample sizes divided by ten.
    #[arg(long)]
    quick: bool,
    /// Run only these criteria, comma separated.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
    /// Write the outcomes as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Serialize)]
struct RateOut {
    phi: f64,
    branch: Branch,
    s_star: f64,
    a_star: f64,
}

#[derive(Serialize)]
struct ShortOut {
    u: f64,
    horizon: f64,
    asymptotic: f64,
    exact: f64,
}

#[derive(Serialize)]
struct LtOut {
    gamma: f64,
    value: f64,
}

enum Failure {
    Domain(String),
    Failed,
}

impl From<rbm_area::Error> for Failure {
    fn from(e: rbm_area::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json<S: Serialize>(v: &S) -> CliResult {
    println!("{}", serde_json::to_string(v)?);
    Ok(())
}

fn asym(a: &AsymArgs) -> CliResult {
    let params = a.drain.params()?;
    if let Some(path) = &a.batch {
        let input = BufReader::new(File::open(path)?);
        let mut out = sink(a.out.as_deref())?;
        evaluate_batch_csv(input, &mut out, &params)?;
        out.flush()?;
        return Ok(());
    }
    let horizon = a.horizon.ok_or_else(|| Failure::Domain("--T is required unless --batch is given".into()))?;
    if let Some(u) = a.u {
        if horizon.is_nan() || horizon <= 0.0 {
            return Err(Failure::Domain(format!("horizon must be positive, got {horizon}")));
        }
        return print_json(&ShortOut {
            u,
            horizon,
            asymptotic: theorem1_asymptotic(u, horizon, &params),
            exact: lemma1_exact_probability(u, horizon, &params),
        });
    }
    let m = a.m.ok_or_else(|| Failure::Domain("--M or --u is required".into()))?;
    if !(horizon > 0.0 && m > 0.0) {
        return Err(Failure::Domain(format!("T and M must be positive, got T={horizon}, M={m}")));
    }
    let r = phi_tm(horizon, m, &params);
    print_json(&RateOut { phi: r.value, branch: r.branch, s_star: r.s_star, a_star: r.a_star })
}

fn mlp(a: &MlpArgs) -> CliResult {
    let params = a.drain.params()?;
    let path = most_likely_path(a.horizon, a.m, &params, a.n)?;
    let mut out = sink(a.out.as_deref())?;
    path.write_csv(&params, &mut out)?;
    out.flush()?;
    Ok(())
}

fn laplace(a: &LaplaceArgs) -> CliResult {
    let params = a.drain.params()?;
    let kind = match a.mode {
        LtMode::Stationary => TransformKind::Stationary,
        LtMode::Transient => TransformKind::Transient { x: a.x.expect("clap enforces --x") },
    };
    let table = transform_table(kind, &a.gamma, &params)?;
    if table.len() == 1 && a.out.is_none() {
        return print_json(&LtOut { gamma: table[0].gamma, value: table[0].value });
    }
    let mut out = sink(a.out.as_deref())?;
    write_transform_csv(&table, &mut out)?;
    out.flush()?;
    Ok(())
}

fn sim_tail(a: &SimTailArgs, seed: u64, runner: &Runner) -> CliResult {
    let params = a.drain.params()?;
    let sim = a.sim.config(seed, a.horizon);
    print_json(&estimate_pi(&params, HorizonRule::Fixed(a.horizon), a.u, &sim, a.n, runner)?)
}

fn sim_busy(a: &SimBusyArgs, seed: u64, runner: &Runner) -> CliResult {
    let params = a.drain.params()?;
    if let (Some(horizon), Some(path)) = (a.trace_horizon, &a.trace_out) {
        let sim = a.sim.config(seed, horizon);
        let q0 = sample_stationary_q0(&params, &mut sim.with_stream(u64::MAX).rng());
        let trace = simulate_trace(&params, &sim, q0)?;
        let mut out = sink(Some(path))?;
        trace.write_csv(&mut out)?;
        out.flush()?;
        if let (Some(delta), Some(cpath)) = (a.delta, &a.cycles_out) {
            let cycles = decompose_cycles(&trace, delta)?;
            let mut out = sink(Some(cpath))?;
            write_cycles_csv(&cycles, &mut out)?;
            out.flush()?;
        }
    }
    let sim = a.sim.config(seed, 1.0);
    let grids = BusyGrids { x_grid: a.x.clone(), gamma_grid: a.gamma.clone() };
    let report = busy_period_suite_with(&params, &sim, a.n, &grids, runner)?;
    print_json(&report)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Failed)
    }
}

fn scaling(a: &ScalingArgs, seed: u64, threads: Option<usize>) -> CliResult {
    let params = a.drain.params()?;
    let runner = Runner::new(threads)?.with_level(a.level)?;
    let sim = a.sim.config(seed, a.horizon);
    print_json(&scaling_check(&params, a.horizon, a.m, a.n_superpose, &sim, a.n, &runner)?)
}

fn regime(a: &RegimeArgs, seed: Option<u64>, threads: Option<usize>) -> CliResult {
    let text = std::fs::read_to_string(&a.experiment)?;
    let mut exp = Experiment::from_json(&text)?;
    if let Some(seed) = seed {
        exp.sim.seed = seed;
    }
    let report = exp.run(threads)?;
    println!("{}", report.to_json()?);
    if let Some(path) = &a.out {
        let mut out = sink(Some(path))?;
        report.write_csv(&mut out)?;
        out.flush()?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Failed)
    }
}

fn validate(a: &ValidateArgs, seed: u64, threads: Option<usize>) -> CliResult {
    let scale = if a.quick { Scale::Quick } else { Scale::Full };
    let ids: Vec<u8> = if a.only.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { a.only.clone() };
    if let Some(bad) = ids.iter().find(|id| !CRITERIA.iter().any(|c| c.0 == **id)) {
        return Err(Failure::Domain(format!("no criterion {bad}; valid ids are 1 to {}", CRITERIA.len())));
    }
    let mut suite = Suite::new(scale, seed, threads)?;
    println!("acceptance suite ({scale:?} scale, seed {seed}, {} threads)", suite.threads());
    let outcomes: Vec<_> = ids
        .iter()
        .map(|&id| {
            let o = suite.run(id);
            println!("{o}");
            o
        })
        .collect();
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed} of {} criteria passed", outcomes.len());
    if let Some(path) = &a.json {
        std::fs::write(path, serde_json::to_string_pretty(&outcomes)?)?;
    }
    if passed == outcomes.len() {
        Ok(())
    } else {
        Err(Failure::Failed)
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors and 0 for --help/--version
    let cli = Cli::parse();
    let explicit_seed = std::env::args().any(|a| a == "--seed" || a.starts_with("--seed="));
    let runner = match Runner::new(cli.threads) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let res = match &cli.command {
        Command::Asym(a) => asym(a),
        Command::Mlp(a) => mlp(a),
        Command::Laplace(a) => laplace(a),
        Command::SimTail(a) => sim_tail(a, cli.seed, &runner),
        Command::SimBusy(a) => sim_busy(a, cli.seed, &runner),
        Command::Scaling(a) => scaling(a, cli.seed, cli.threads),
        Command::Regime(a) => regime(a, explicit_seed.then_some(cli.seed), cli.threads),
        Command::Validate(a) => validate(a, cli.seed, cli.threads),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Failed) => ExitCode::from(1),
    }
}
