use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use chemotaxis_core::inequality::{
    check_33_1, check_33_2, check_44_1, check_with_retry, ensemble_kind, measure_trace_constant, nonradial_kind,
    ode_bound, ode_comparison, summarize, write_reports_csv, young_63_check, BoundaryConstants, InequalityId,
    InequalityReport, InequalitySummary, MeasuredConstant, OdeParams, ODE_SWEEP_LAMBDAS, ODE_SWEEP_VALUES,
    ODE_SWEEP_Y0_FACTORS,
};
use chemotaxis_core::initial::{gen_test_function, TestFunctionKind};
use chemotaxis_core::par::{self, Execution};
use chemotaxis_core::Grid;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::report::{create_dir, write_json, Assertion, Outcome};

/// Number of `(a, b, tau, lambda)` points in the ODE parameter grid.
pub const ODE_POINTS: u64 = 81;

/// Parameter point and initial value for an ODE row: the seed walks the
/// 81-point grid, then the initial-value factors.
pub fn ode_params_for_seed(seed: u64) -> OdeParams {
    let p = (seed % ODE_POINTS) as usize;
    let f = ODE_SWEEP_Y0_FACTORS[(seed / ODE_POINTS % 3) as usize];
    let (a, b, tau, lambda) = (ODE_SWEEP_VALUES[p / 27], ODE_SWEEP_VALUES[p / 9 % 3], ODE_SWEEP_VALUES[p / 3 % 3], ODE_SWEEP_LAMBDAS[p % 3]);
    OdeParams { a, b, tau, lambda, y0: vec![f * ode_bound(a, b, tau, lambda)] }
}

fn anchor(id: InequalityId) -> &'static str {
    match id {
        InequalityId::L33_1 => "int |grad phi|^4/phi^3 <= (2+sqrt n)^2 int phi |D^2 ln phi|^2",
        InequalityId::L33_2 => "int |D^2 phi|^2/phi <= (2n+8 sqrt n+10) int phi |D^2 ln phi|^2",
        InequalityId::L44_1 => "boundary integral of (1/phi) d|grad phi|^2/d nu controlled by interior terms",
        InequalityId::OdeCmp => "y' <= b - a y^lambda implies y <= C after tau",
        InequalityId::Young63 => "Young inequality for the regularized flux",
    }
}

#[derive(Serialize)]
struct InequalitiesSummary<'a> {
    mode: &'static str,
    seeds: Vec<u64>,
    checks: &'a [InequalityId],
    trace_constant: Option<MeasuredConstant>,
    summaries: Vec<InequalitySummary>,
    assertions: &'a [Assertion],
}

/// One row per `(seed, check)`, seed-major.
pub fn inequality_rows(cfg: &ExperimentConfig, grid: &Grid) -> Result<(Vec<InequalityReport>, Option<MeasuredConstant>)> {
    let ineq = cfg.inequalities.as_ref().context("section [inequalities]")?;
    let seeds: Vec<u64> = (cfg.seed..cfg.seed + ineq.seeds).collect();
    let trace = ineq.checks.contains(&InequalityId::L44_1).then(|| measure_trace_constant(grid, cfg.trace_samples(), cfg.seed));
    let boundary = match (&trace, ineq.eta) {
        (Some(c), Some(eta)) => Some(BoundaryConstants::new(grid, eta, c.inflated)?),
        _ => None,
    };
    let (geometry, resolution) = (cfg.geometry, cfg.resolution);
    let rows = par::map(&seeds, Execution::Parallel, |&s| -> Result<Vec<InequalityReport>> {
        ineq.checks
            .iter()
            .map(|id| -> Result<InequalityReport> {
                let row = match id {
                    InequalityId::L33_1 => check_with_retry(geometry, resolution, s, ensemble_kind(s), check_33_1)?,
                    InequalityId::L33_2 => check_with_retry(geometry, resolution, s, ensemble_kind(s), check_33_2)?,
                    InequalityId::L44_1 => {
                        check_44_1(grid, &gen_test_function(s, grid, nonradial_kind(s)), boundary.as_ref().unwrap(), s)?
                    }
                    InequalityId::OdeCmp => {
                        let mut r = ode_comparison(&ode_params_for_seed(s))?.remove(0);
                        r.seed = s;
                        r
                    }
                    InequalityId::Young63 => {
                        let u = gen_test_function(s, grid, TestFunctionKind::BumpPlusFloor { amplitude: 5.0 });
                        let v = gen_test_function(s + 1, grid, TestFunctionKind::LowFourierPositive);
                        young_63_check(grid, &u, &v, ineq.eps.unwrap(), s)?
                    }
                };
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()
            .with_context(|| format!("seed {s}"))
    });
    let mut out = Vec::with_capacity(seeds.len() * ineq.checks.len());
    for r in rows {
        out.extend(r?);
    }
    Ok((out, trace))
}

pub fn run_inequalities(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let grid = cfg.grid()?;
    let ineq = cfg.inequalities.as_ref().context("section [inequalities]")?;
    create_dir(out)?;
    let (rows, trace) = inequality_rows(cfg, &grid)?;
    let path = out.join("report.csv");
    write_reports_csv(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?), &rows)?;
    let summaries = summarize(&rows);
    let assertions: Vec<Assertion> = summaries
        .iter()
        .map(|s| {
            Assertion::new(
                s.id.label(),
                anchor(s.id),
                s.passed == s.rows,
                format!("{}/{} pass, {} refined, worst ratio {} (seed {})", s.passed, s.rows, s.refined, s.worst_ratio, s.worst_seed),
            )
        })
        .collect();
    write_json(
        &out.join("summary.json"),
        &InequalitiesSummary {
            mode: "inequalities",
            seeds: (cfg.seed..cfg.seed + ineq.seeds).collect(),
            checks: &ineq.checks,
            trace_constant: trace,
            summaries,
            assertions: &assertions,
        },
    )?;
    Ok(Outcome { mode: "inequalities".into(), output: out.to_path_buf(), assertions })
}
