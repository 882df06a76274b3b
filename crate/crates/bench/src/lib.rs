//! Benchmark harness for the ILS splitting solvers: campaigns, `α` sweeps
//! and the desk-scale preset, emitted as CSV.

pub mod campaign;
pub mod stats;

pub use campaign::{
    run_campaign, run_cell, sweep_alpha, write_csv, BenchRow, CampaignConfig, CampaignError,
    CellOptions, InstanceSource, MethodGrid,
};

/// Environment variable sizing the kernel thread pool.
pub const THREADS_ENV: &str = "ILS_SPLIT_THREADS";

/// Thread count from [`THREADS_ENV`]; 1 when unset.
pub fn threads_from_env() -> Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(format!("{THREADS_ENV} must be a positive integer, got {v:?}")),
        },
    }
}
