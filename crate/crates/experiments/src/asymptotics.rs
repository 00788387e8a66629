use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use chemotaxis_core::diagnostics::{
    convergence_report, first_passage, growth_fit, ConvergenceReport, DiagnosticsRecord, GrowthFit, GrowthQuantity,
    InvariantMonitor, Lemma13Monitor, PassageTime,
};
use chemotaxis_core::solver::run;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::report::{create_dir, structural_assertions, write_diag, write_json, Assertion, Outcome, SnapshotWriter};

/// Per-step relative growth allowed for `int (u+1)^p/(delta-v)`.
pub const LEMMA13_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassageRow {
    /// Fraction of `int v0`.
    pub fraction: f64,
    pub threshold: f64,
    pub time: PassageTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthRow {
    pub quantity: GrowthQuantity,
    pub predicted_exponent: f64,
    pub fit: Option<GrowthFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticsReport {
    pub mu: f64,
    pub eps: f64,
    pub measure: f64,
    pub v_l1_initial: f64,
    /// First time `int v <= fraction * int v0`.
    pub t_star: Vec<PassageRow>,
    /// First time `max v <= fraction * int v0 / |domain|`.
    pub t_star_star: Vec<PassageRow>,
    pub growth: Vec<GrowthRow>,
    pub convergence: Option<ConvergenceReport>,
    pub convergence_error: Option<String>,
    /// Records where `max v * |domain| < int v`.
    pub norm_ordering_violations: usize,
    pub lemma13: Option<Lemma13Monitor>,
}

fn passages(records: &[DiagnosticsRecord], fractions: &[f64], scale: f64, value: fn(&DiagnosticsRecord) -> f64) -> Vec<PassageRow> {
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let q: Vec<f64> = records.iter().map(value).collect();
    fractions
        .iter()
        .map(|&f| {
            // "drops to or below": nudge the threshold so equality counts
            let threshold = f * scale;
            PassageRow { fraction: f, threshold, time: first_passage(&t, &q, threshold * (1.0 + 1e-15)) }
        })
        .collect()
}

pub fn asymptotics_report(
    cfg: &ExperimentConfig,
    records: &[DiagnosticsRecord],
    mu: f64,
    eps: f64,
    measure: f64,
    lemma13: Option<Lemma13Monitor>,
) -> Result<AsymptoticsReport> {
    let a = cfg.asymptotics.as_ref().context("section [asymptotics]")?;
    let v0 = records[0].v_l1;
    let growth = GrowthQuantity::ALL
        .iter()
        .map(|&q| {
            let fit = growth_fit(records, q, a.fit_window);
            GrowthRow {
                quantity: q,
                predicted_exponent: q.predicted_exponent(),
                error: fit.as_ref().err().map(|e| e.to_string()),
                fit: fit.ok(),
            }
        })
        .collect();
    let conv = convergence_report(records, mu);
    Ok(AsymptoticsReport {
        mu,
        eps,
        measure,
        v_l1_initial: v0,
        t_star: passages(records, &a.thresholds, v0, |r| r.v_l1),
        t_star_star: passages(records, &a.thresholds, v0 / measure, |r| r.v_linf),
        growth,
        convergence_error: conv.as_ref().err().map(|e| e.to_string()),
        convergence: conv.ok(),
        norm_ordering_violations: records.iter().filter(|r| r.v_linf * measure < r.v_l1 * (1.0 - 1e-12)).count(),
        lemma13,
    })
}

fn report_assertions(cfg: &ExperimentConfig, rep: &AsymptoticsReport) -> Vec<Assertion> {
    let a = cfg.asymptotics.as_ref().unwrap();
    let mut out = vec![Assertion::new(
        "norm ordering",
        "max v |domain| >= int v",
        rep.norm_ordering_violations == 0,
        format!("{} violating records", rep.norm_ordering_violations),
    )];
    let ordered = rep.t_star.iter().zip(&rep.t_star_star).all(|(s, ss)| match (s.time.time(), ss.time.time()) {
        (Some(t1), Some(t2)) => t2 >= t1 * (1.0 - 1e-12),
        (None, Some(_)) => false,
        _ => true,
    });
    out.push(Assertion::new(
        "passage ordering",
        "T**(delta / |domain|) >= T*(delta)",
        ordered,
        format!("T* = {:?}, T** = {:?}", rep.t_star.iter().map(|r| r.time).collect::<Vec<_>>(), rep.t_star_star.iter().map(|r| r.time).collect::<Vec<_>>()),
    ));
    for g in &rep.growth {
        let cap = match g.quantity {
            GrowthQuantity::UDevL1 => a.max_exponent_u_dev,
            _ => a.max_exponent_other,
        };
        if let Some(cap) = cap {
            let (pass, detail) = match (&g.fit, &g.error) {
                (Some(f), _) => (f.beta.is_none_or(|b| b <= cap), format!("beta = {:?}, cap {cap}", f.beta)),
                (None, Some(e)) => (false, e.clone()),
                _ => (false, "no fit".into()),
            };
            out.push(Assertion::new(&format!("growth exponent {}", g.quantity.name()), "sublinear growth of dissipated integrals", pass, detail));
        }
    }
    if let Some(tol) = a.rate_tolerance {
        let expected = rep.mu / (1.0 + rep.eps * rep.mu);
        let (pass, detail) = match (&rep.convergence, &rep.convergence_error) {
            (Some(c), _) => (
                (c.v_rate - expected).abs() <= tol * expected,
                format!("fitted {} against mu/(1+eps mu) = {expected}", c.v_rate),
            ),
            (None, e) => (false, e.clone().unwrap_or_default()),
        };
        out.push(Assertion::new("signal decay rate", "exponential decay of max v at rate mu/(1+eps mu)", pass, detail));
    }
    if let Some(l) = &rep.lemma13 {
        out.push(Assertion::new(
            "small-signal functional non-increasing",
            "int (u+1)^p/(delta-v) non-increasing once max v < delta/2",
            l.max_rel_increase <= LEMMA13_SLACK,
            format!("{} active steps, largest relative increase {:e}", l.active_steps, l.max_rel_increase),
        ));
    }
    out
}

#[derive(Serialize)]
struct AsymptoticsSummary<'a> {
    mode: &'static str,
    report: &'a AsymptoticsReport,
    monitor: &'a InvariantMonitor,
    assertions: &'a [Assertion],
}

pub fn asymptotics_campaign(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let grid = cfg.grid()?;
    let sim = cfg.sim.as_ref().context("section [sim]")?;
    let eps = sim.eps.context("field `sim.eps`")?;
    let params = cfg.sim_params(eps)?;
    let initial = cfg.initial_pair(&grid, eps)?;
    create_dir(out)?;
    let mut hooks = (
        (InvariantMonitor::new(), cfg.lemma13().map(Lemma13Monitor::new)),
        SnapshotWriter::new(out, sim.snapshot_every)?,
    );
    let r = run(&grid, &initial, &params, &mut hooks).context("asymptotics run")?;
    hooks.1.finish(&grid, &r.final_state)?;
    write_diag(out, &grid, &r.records)?;
    let ((monitor, lemma13), _) = hooks;

    let report = asymptotics_report(cfg, &r.records, initial.mu, eps, grid.measure(), lemma13)?;
    let mut assertions = structural_assertions(&monitor, &r.records);
    assertions.extend(report_assertions(cfg, &report));

    let path = out.join("report.csv");
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "table,fraction,threshold,time")?;
    for (table, rows) in [("t_star", &report.t_star), ("t_star_star", &report.t_star_star)] {
        for row in rows {
            let time = row.time.time().map_or_else(|| "not reached by t_end".to_string(), |t| t.to_string());
            writeln!(w, "{table},{},{},{time}", row.fraction, row.threshold)?;
        }
    }
    w.flush()?;
    write_json(
        &out.join("summary.json"),
        &AsymptoticsSummary { mode: "asymptotics", report: &report, monitor: &monitor, assertions: &assertions },
    )?;
    Ok(Outcome { mode: "asymptotics".into(), output: out.to_path_buf(), assertions })
}
