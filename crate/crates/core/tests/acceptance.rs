//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs at full scale. `ACCEPTANCE_SCALE=quick` divides Monte Carlo sample
//! sizes by ten and `ACCEPTANCE_THREADS` pins the worker count.

use std::process::ExitCode;

use rbm_area::acceptance::{run_all, Scale, DEFAULT_SEED};

fn main() -> ExitCode {
    let scale = match std::env::var("ACCEPTANCE_SCALE").as_deref() {
        Ok("quick") => Scale::Quick,
        _ => Scale::Full,
    };
    let threads = std::env::var("ACCEPTANCE_THREADS").ok().and_then(|s| s.parse().ok());
    println!("acceptance suite ({scale:?} scale, seed {DEFAULT_SEED})");
    let outcomes = match run_all(scale, DEFAULT_SEED, threads, |o| println!("{o}")) {
        Ok(o) => o,
        Err(e) => {
            println!("suite setup failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!("{} of {} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
