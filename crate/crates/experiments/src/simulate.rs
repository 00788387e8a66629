use std::path::Path;

use anyhow::{Context, Result};
use chemotaxis_core::diagnostics::{convergence_report, DiagnosticsRecord, InvariantMonitor};
use chemotaxis_core::initial::Scenario;
use chemotaxis_core::solver::run;
use chemotaxis_core::{Geometry, Resolution};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::report::{create_dir, structural_assertions, write_diag, write_json, Assertion, Outcome, SnapshotWriter};

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub mode: &'static str,
    pub geometry: Geometry,
    pub resolution: Resolution,
    pub scenario: Scenario,
    pub eps: f64,
    pub mu: f64,
    pub steps: u64,
    pub t_end: f64,
    /// Late-time decay rate of `max v`, when the run is long enough to fit one.
    pub v_rate: Option<f64>,
    pub v_rate_note: Option<String>,
    /// `mu / (1 + eps mu)`
    pub v_rate_reference: f64,
    pub snapshots: usize,
    pub clip_events: usize,
    pub monitor: InvariantMonitor,
    pub final_record: DiagnosticsRecord,
    pub assertions: Vec<Assertion>,
}

pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let grid = cfg.grid()?;
    let sim = cfg.sim.as_ref().context("section [sim]")?;
    let eps = sim.eps.context("field `sim.eps`")?;
    let params = cfg.sim_params(eps)?;
    let initial = cfg.initial_pair(&grid, eps)?;
    create_dir(out)?;
    let mut hooks = (InvariantMonitor::new(), SnapshotWriter::new(out, sim.snapshot_every)?);
    let run_out = run(&grid, &initial, &params, &mut hooks).context("simulation")?;
    hooks.1.finish(&grid, &run_out.final_state)?;
    write_diag(out, &grid, &run_out.records)?;

    let mu = initial.mu;
    let (v_rate, v_rate_note) = match convergence_report(&run_out.records, mu) {
        Ok(r) => (Some(r.v_rate), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let assertions = structural_assertions(&hooks.0, &run_out.records);
    let summary = SimulationSummary {
        mode: "simulate",
        geometry: cfg.geometry,
        resolution: cfg.resolution,
        scenario: cfg.initial.clone().unwrap(),
        eps,
        mu,
        steps: run_out.final_state.steps,
        t_end: run_out.final_state.t,
        v_rate,
        v_rate_note,
        v_rate_reference: mu / (1.0 + eps * mu),
        snapshots: hooks.1.written,
        clip_events: run_out.clip_events.len(),
        monitor: hooks.0,
        final_record: run_out.records.last().unwrap().clone(),
        assertions: assertions.clone(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(Outcome { mode: "simulate".into(), output: out.to_path_buf(), assertions })
}
