use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chemotaxis_core::diagnostics::{write_records_csv, DiagnosticsRecord, InvariantMonitor};
use chemotaxis_core::grid::write_snapshot_csv;
use chemotaxis_core::solver::{Hooks, SimState, StepInfo};
use chemotaxis_core::Grid;
use serde::Serialize;

/// Outcome of one enabled check. `anchor` names the identity or estimate
/// the check certifies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub anchor: String,
    pub pass: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: &str, anchor: &str, pass: bool, detail: String) -> Self {
        Assertion { name: name.into(), anchor: anchor.into(), pass, detail }
    }
}

/// Result of `run_experiment`: every assertion, pass or fail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub mode: String,
    pub output: PathBuf,
    pub assertions: Vec<Assertion>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.pass)
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_diag(dir: &Path, grid: &Grid, records: &[DiagnosticsRecord]) -> Result<()> {
    let path = dir.join("diag.csv");
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    write_records_csv(&mut w, grid.dimension(), records)?;
    w.flush()?;
    Ok(())
}

/// Writes `fields/t<k>.csv` (`u`) and `fields/v_t<k>.csv` (`v`) every
/// `every` steps, numbering snapshots `k = 0, 1, ...`.
pub struct SnapshotWriter {
    dir: PathBuf,
    every: Option<u64>,
    pub written: usize,
    last_step: Option<u64>,
}

impl SnapshotWriter {
    pub fn new(run_dir: &Path, every: Option<u64>) -> Result<Self> {
        let dir = run_dir.join("fields");
        create_dir(&dir)?;
        Ok(SnapshotWriter { dir, every: every.filter(|e| *e > 0), written: 0, last_step: None })
    }

    fn write(&mut self, grid: &Grid, state: &SimState) -> chemotaxis_core::Result<()> {
        let k = self.written;
        for (name, field) in [(format!("t{k}.csv"), &state.u), (format!("v_t{k}.csv"), &state.v)] {
            let mut w = BufWriter::new(File::create(self.dir.join(name))?);
            write_snapshot_csv(&mut w, grid, state.t, field)?;
            w.flush()?;
        }
        self.written += 1;
        self.last_step = Some(state.steps);
        Ok(())
    }

    /// Write the final state unless it was the last snapshot taken.
    pub fn finish(&mut self, grid: &Grid, state: &SimState) -> Result<()> {
        if self.last_step != Some(state.steps) {
            self.write(grid, state)?;
        }
        Ok(())
    }
}

impl Hooks for SnapshotWriter {
    fn on_step(&mut self, grid: &Grid, state: &SimState, _info: &StepInfo) -> chemotaxis_core::Result<()> {
        let due = state.steps == 0 || self.every.is_some_and(|e| state.steps % e == 0);
        if due {
            self.write(grid, state)?;
        }
        Ok(())
    }
}

/// Slack on the per-step growth of the signal norms, relative to the initial norm.
pub const V_MONOTONE_SLACK: f64 = 1e-10;
pub const MASS_TOL: f64 = 1e-12;
pub const GRADIENT_BUDGET_SLACK: f64 = 0.02;
pub const CLIP_MASS_TOL: f64 = 1e-10;

/// Checks shared by every mode that runs the solver.
pub fn structural_assertions(monitor: &InvariantMonitor, records: &[DiagnosticsRecord]) -> Vec<Assertion> {
    let first = &records[0];
    let mut out = vec![Assertion::new(
        "mass conservation",
        "mass identity int u(t) = int u0",
        monitor.max_mass_drift <= MASS_TOL,
        format!("max relative drift {:e} (tolerance {MASS_TOL:e})", monitor.max_mass_drift),
    )];
    let mono = monitor.v_monotone(V_MONOTONE_SLACK);
    out.push(Assertion::new(
        "signal norms non-increasing",
        "comparison principle for v",
        mono.iter().all(|m| *m),
        format!(
            "largest step increases of ||v||_1, ||v||_2, ||v||_inf: {:e}, {:e}, {:e}",
            monitor.max_v_increase[0], monitor.max_v_increase[1], monitor.max_v_increase[2]
        ),
    ));
    let budget = first.v_l2 * first.v_l2;
    let worst = records.iter().map(|r| 2.0 * r.cum_grad_v_sq + r.v_l2 * r.v_l2).fold(0.0, f64::max);
    out.push(Assertion::new(
        "signal gradient dissipation",
        "2 intint |grad v|^2 + int v(T)^2 <= int v0^2",
        worst <= budget * (1.0 + GRADIENT_BUDGET_SLACK),
        format!("largest left side {worst} against int v0^2 = {budget}"),
    ));
    let consumed = records.last().map_or(0.0, |r| r.cum_consumption);
    out.push(Assertion::new(
        "consumption bound",
        "intint u v/(1+eps u) <= int v0",
        consumed <= first.v_l1 * (1.0 + 1e-8),
        format!("{consumed} against int v0 = {}", first.v_l1),
    ));
    let clipped = records.last().map_or(0.0, |r| r.clip_total_mass);
    out.push(Assertion::new(
        "nonnegativity",
        "u >= 0 and v >= 0",
        monitor.min_u >= 0.0 && monitor.min_v >= 0.0 && clipped <= CLIP_MASS_TOL * monitor.mass0,
        format!("min u {}, min v {}, clipped mass {clipped:e}", monitor.min_u, monitor.min_v),
    ));
    let energy_ok = records.iter().all(|r| r.energy_f.is_none_or(|f| f >= -1e-12));
    let dissipation_ok = records.iter().all(|r| {
        [r.d_fisher_u, r.d_hess_log_v, r.d_weighted_grad_v].iter().all(|d| d.is_none_or(|d| d >= 0.0))
    });
    out.push(Assertion::new(
        "energy and dissipation signs",
        "F_eps >= 0 and D_eps >= 0",
        energy_ok && dissipation_ok,
        format!("energy nonnegative: {energy_ok}, dissipation nonnegative: {dissipation_ok}"),
    ));
    out
}
