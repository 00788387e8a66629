//! Configuration-driven campaigns for the regularized chemotaxis-consumption
//! solver: single runs, eps-sweeps, long-time asymptotics and inequality
//! certification. Each mode writes its artifacts into one output directory
//! and reports a list of assertions; the process exit code reflects them.

pub mod asymptotics;
pub mod config;
pub mod inequalities;
pub mod report;
pub mod simulate;
pub mod sweep;

use std::path::Path;

use anyhow::Result;

pub use config::{ExperimentConfig, Mode};
pub use report::{Assertion, Outcome};

/// Environment variable overriding the worker-thread count.
pub const THREADS_ENV: &str = "CHEMOTAXIS_THREADS";

/// Run the configured mode, writing artifacts under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    match cfg.mode {
        Mode::Simulate => simulate::simulate(cfg, out),
        Mode::EpsSweep => sweep::run_sweep(cfg, out),
        Mode::Asymptotics => asymptotics::asymptotics_campaign(cfg, out),
        Mode::Inequalities => inequalities::run_inequalities(cfg, out),
    }
}
