use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use chemotaxis_core::diagnostics::{time_integral, DiagnosticsRecord, InvariantMonitor};
use chemotaxis_core::par::{self, Execution};
use chemotaxis_core::solver::{run, SimState, StateRecorder};
use chemotaxis_core::Grid;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::report::{create_dir, structural_assertions, write_diag, write_json, Assertion, Outcome};

/// Space-time L1 distances `int_0^T int |a - b|` between two members.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairDistances {
    pub eps_a: f64,
    pub eps_b: f64,
    pub u: f64,
    pub grad_u: f64,
    /// Of the regularized flux `u/(1+eps u)^2 grad v`.
    pub flux: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Trend {
    #[serde(rename = "Cauchy-like")]
    CauchyLike,
    #[serde(rename = "not monotone")]
    NotMonotone,
}

impl Trend {
    /// Cauchy-like iff the sequence strictly decreases.
    pub fn of(values: &[f64]) -> Trend {
        if values.windows(2).all(|w| w[1] < w[0]) {
            Trend::CauchyLike
        } else {
            Trend::NotMonotone
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub eps: Vec<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub samples: usize,
    /// Consecutive members along the ladder.
    pub pairs: Vec<PairDistances>,
    pub u_trend: Trend,
    pub grad_u_trend: Trend,
    pub flux_trend: Trend,
}

/// Distances between two trajectories sampled at the same times.
pub fn space_time_distances(grid: &Grid, a: &[SimState], eps_a: f64, b: &[SimState], eps_b: f64) -> Result<PairDistances> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| (x.t - y.t).abs() > 1e-12 * x.t.abs().max(1.0)) {
        bail!("trajectories for eps = {eps_a} and eps = {eps_b} are not sampled at common times");
    }
    let t: Vec<f64> = a.iter().map(|s| s.t).collect();
    let norm = |g: [f64; 2]| (g[0] * g[0] + g[1] * g[1]).sqrt();
    let mut series = [vec![], vec![], vec![], vec![]];
    for (x, y) in a.iter().zip(b) {
        let (gux, guy) = (grid.cell_gradient(&x.u), grid.cell_gradient(&y.u));
        let (gvx, gvy) = (grid.cell_gradient(&x.v), grid.cell_gradient(&y.v));
        let ax = |k: usize| x.u[k] / (1.0 + eps_a * x.u[k]).powi(2);
        let ay = |k: usize| y.u[k] / (1.0 + eps_b * y.u[k]).powi(2);
        series[0].push(grid.integrate_with(|k| (x.u[k] - y.u[k]).abs()));
        series[1].push(grid.integrate_with(|k| norm([gux[k][0] - guy[k][0], gux[k][1] - guy[k][1]])));
        series[2].push(grid.integrate_with(|k| {
            norm([ax(k) * gvx[k][0] - ay(k) * gvy[k][0], ax(k) * gvx[k][1] - ay(k) * gvy[k][1]])
        }));
        series[3].push(grid.integrate_with(|k| (x.v[k] - y.v[k]).abs()));
    }
    Ok(PairDistances {
        eps_a,
        eps_b,
        u: time_integral(&t, &series[0]),
        grad_u: time_integral(&t, &series[1]),
        flux: time_integral(&t, &series[2]),
        v: time_integral(&t, &series[3]),
    })
}

struct Member {
    states: Vec<SimState>,
    records: Vec<DiagnosticsRecord>,
    monitor: InvariantMonitor,
}

pub fn eps_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<(SweepReport, Vec<Assertion>)> {
    let grid = cfg.grid()?;
    let sweep = cfg.sweep.as_ref().context("section [sweep]")?;
    create_dir(out)?;
    let indexed: Vec<(usize, f64)> = sweep.eps.iter().copied().enumerate().collect();
    let members = par::map(&indexed, Execution::Parallel, |&(i, eps)| -> Result<Member> {
        let params = cfg.sim_params(eps)?;
        let initial = cfg.initial_pair(&grid, eps)?;
        let mut hooks = (InvariantMonitor::new(), StateRecorder::new(sweep.sample_every));
        let r = run(&grid, &initial, &params, &mut hooks).with_context(|| format!("sweep member eps = {eps}"))?;
        let dir = out.join(format!("eps_{i}"));
        create_dir(&dir)?;
        write_diag(&dir, &grid, &r.records)?;
        Ok(Member { states: hooks.1.states, records: r.records, monitor: hooks.0 })
    });
    let members: Vec<Member> = members.into_iter().collect::<Result<_>>()?;

    let mut assertions = Vec::new();
    for (m, eps) in members.iter().zip(&sweep.eps) {
        for mut a in structural_assertions(&m.monitor, &m.records) {
            a.name = format!("eps = {eps}: {}", a.name);
            assertions.push(a);
        }
    }
    let mut pairs = Vec::new();
    for i in 0..members.len() - 1 {
        let (a, b) = (&members[i], &members[i + 1]);
        pairs.push(space_time_distances(&grid, &a.states, sweep.eps[i], &b.states, sweep.eps[i + 1])?);
    }
    let valid = pairs.iter().all(|p| [p.u, p.grad_u, p.flux, p.v].iter().all(|d| d.is_finite() && *d >= 0.0));
    assertions.push(Assertion::new(
        "sweep distances valid",
        "space-time L1 distances are finite and nonnegative",
        valid,
        format!("{} pairs", pairs.len()),
    ));
    let pick = |f: fn(&PairDistances) -> f64| pairs.iter().map(f).collect::<Vec<_>>();
    let sim = cfg.sim.as_ref().unwrap();
    let report = SweepReport {
        eps: sweep.eps.clone(),
        dt: sim.dt.unwrap(),
        t_end: sim.t_end,
        samples: members[0].states.len(),
        u_trend: Trend::of(&pick(|p| p.u)),
        grad_u_trend: Trend::of(&pick(|p| p.grad_u)),
        flux_trend: Trend::of(&pick(|p| p.flux)),
        pairs,
    };

    let path = out.join("report.csv");
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "eps_a,eps_b,u_l1,grad_u_l1,flux_l1,v_l1")?;
    for p in &report.pairs {
        writeln!(w, "{},{},{},{},{},{}", p.eps_a, p.eps_b, p.u, p.grad_u, p.flux, p.v)?;
    }
    w.flush()?;
    Ok((report, assertions))
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    mode: &'static str,
    report: &'a SweepReport,
    assertions: &'a [Assertion],
}

pub fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let (report, assertions) = eps_sweep(cfg, out)?;
    write_json(&out.join("summary.json"), &SweepSummary { mode: "eps_sweep", report: &report, assertions: &assertions })?;
    Ok(Outcome { mode: "eps_sweep".into(), output: out.to_path_buf(), assertions })
}
