use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chemotaxis_experiments::{run_experiment, ExperimentConfig, Mode, THREADS_ENV};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chemotaxis", version, about = "Simulate and certify the regularized chemotaxis-consumption system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single run: diag.csv, fields/, summary.json
    Simulate(RunArgs),
    /// eps-sweep: per-member diag.csv, report.csv, summary.json
    Sweep(RunArgs),
    /// Long-time campaign: passage tables, growth fits, convergence report
    Asymptotics(RunArgs),
    /// Inequality ensembles: report.csv, summary.json
    Inequalities(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides the CHEMOTAXIS_THREADS environment variable.
    #[arg(long)]
    threads: Option<usize>,
}

fn threads(arg: Option<usize>) -> Result<Option<usize>> {
    if arg.is_some() {
        return Ok(arg);
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) => Ok(Some(s.trim().parse().with_context(|| format!("{THREADS_ENV}={s} is not a thread count"))?)),
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli) -> Result<bool> {
    let (mode, args) = match cli.command {
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Sweep(a) => (Mode::EpsSweep, a),
        Command::Asymptotics(a) => (Mode::Asymptotics, a),
        Command::Inequalities(a) => (Mode::Inequalities, a),
    };
    if let Some(n) = threads(args.threads)? {
        if n == 0 {
            bail!("thread count must be positive");
        }
        chemotaxis_core::par::init_threads(n);
    }
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if cfg.mode != mode {
        bail!("config mode {:?} does not match subcommand `{}`; use `{}`", cfg.mode, mode.command(), cfg.mode.command());
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args.out.or_else(|| cfg.output.clone()).context("no output directory: set `output` in the config or pass --out")?;
    let outcome = run_experiment(&cfg, &out)?;
    for a in &outcome.assertions {
        eprintln!("{} {}: {}", if a.pass { "pass" } else { "FAIL" }, a.name, a.detail);
    }
    for a in outcome.failures() {
        eprintln!("failed check `{}` [{}]", a.name, a.anchor);
    }
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
