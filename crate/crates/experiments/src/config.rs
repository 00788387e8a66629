//! Experiment configuration, read from TOML.
//!
//! ```toml
//! mode = "simulate"
//! seed = 7
//! output = "out/bump"
//!
//! [geometry]
//! kind = "annulus"
//! r0 = 1.0
//! r1 = 2.0
//!
//! [resolution]
//! n0 = 16
//! n1 = 48
//!
//! [initial]
//! scenario = "gaussian_bump"
//! floor = 0.5
//! amplitude = 4.0
//! center = [1.5, 0.0]
//! width = 0.25
//! v = 1.0
//!
//! [sim]
//! eps = 0.1
//! t_end = 1.0
//! cfl_safety = 0.5
//! dt_max = 1e-3
//! diag_cadence = 50
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chemotaxis_core::inequality::{InequalityId, TRACE_SAMPLES};
use chemotaxis_core::initial::{InitialPair, Scenario};
use chemotaxis_core::solver::{DtPolicy, Lemma13Params, SimParams, DEFAULT_CG_TOL};
use chemotaxis_core::{make_grid, Geometry, Grid, Resolution};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    EpsSweep,
    Asymptotics,
    Inequalities,
}

impl Mode {
    /// CLI subcommand that runs this mode.
    pub fn command(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::EpsSweep => "sweep",
            Mode::Asymptotics => "asymptotics",
            Mode::Inequalities => "inequalities",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub geometry: Geometry,
    pub resolution: Resolution,
    pub initial: Option<Scenario>,
    pub sim: Option<SimSection>,
    pub sweep: Option<SweepSection>,
    pub asymptotics: Option<AsymptoticsSection>,
    pub inequalities: Option<InequalitySection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// Required except in sweep mode, where `[sweep] eps` takes its place.
    pub eps: Option<f64>,
    pub t_end: f64,
    /// Fixed step. Exactly one of `dt` and `cfl_safety` must be set.
    pub dt: Option<f64>,
    pub cfl_safety: Option<f64>,
    /// Cap on adaptive steps; required with `cfl_safety`.
    pub dt_max: Option<f64>,
    pub diag_cadence: usize,
    /// Steps between field snapshots; initial and final fields are always written.
    pub snapshot_every: Option<u64>,
    pub cg_tol: Option<f64>,
    /// Mollify the scenario's raw data at the eps-dependent scale (default true).
    pub mollify: Option<bool>,
    pub lemma13_p: Option<f64>,
    pub lemma13_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Non-increasing ladder of regularization parameters.
    pub eps: Vec<f64>,
    /// Steps between the stored states used for space-time distances.
    pub sample_every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsSection {
    /// Fractions of `int v0` for the passage tables.
    pub thresholds: Vec<f64>,
    pub fit_window: [f64; 2],
    /// Optional caps on fitted growth exponents; each enables an assertion.
    pub max_exponent_u_dev: Option<f64>,
    pub max_exponent_other: Option<f64>,
    /// Optional relative tolerance on the late decay rate of `max v`.
    pub rate_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalitySection {
    /// Number of seeds, starting at the top-level `seed`.
    pub seeds: u64,
    pub checks: Vec<InequalityId>,
    /// Required for `L44_1`.
    pub eta: Option<f64>,
    pub trace_samples: Option<usize>,
    /// Required for `YOUNG_63`.
    pub eps: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn grid(&self) -> Result<Grid> {
        make_grid(self.geometry, self.resolution).context("field `geometry`/`resolution`")
    }

    fn sim(&self) -> Result<&SimSection> {
        self.sim.as_ref().with_context(|| format!("section [sim] is required in {:?} mode", self.mode))
    }

    fn scenario(&self) -> Result<&Scenario> {
        self.initial.as_ref().with_context(|| format!("section [initial] is required in {:?} mode", self.mode))
    }

    /// Mode-specific completeness checks; field names appear in every message.
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Simulate | Mode::Asymptotics => {
                self.scenario()?;
                let sim = self.sim()?;
                let eps = sim.eps.context("field `sim.eps` is required")?;
                self.sim_params(eps)?;
            }
            Mode::EpsSweep => {
                self.scenario()?;
                let sim = self.sim()?;
                let sweep = self.sweep.as_ref().context("section [sweep] is required in eps_sweep mode")?;
                if sim.eps.is_some() {
                    bail!("field `sim.eps` must be omitted in eps_sweep mode; list values in `sweep.eps`");
                }
                if sim.dt.is_none() {
                    bail!("field `sim.dt` is required in eps_sweep mode: all members share one fixed step");
                }
                if sweep.eps.len() < 2 {
                    bail!("field `sweep.eps` needs at least two values");
                }
                if sweep.eps.windows(2).any(|w| w[1] > w[0]) {
                    bail!("field `sweep.eps` must be non-increasing, got {:?}", sweep.eps);
                }
                if sweep.sample_every == 0 {
                    bail!("field `sweep.sample_every` must be positive");
                }
                for &eps in &sweep.eps {
                    self.sim_params(eps).with_context(|| format!("sweep member eps = {eps}"))?;
                }
            }
            Mode::Inequalities => {
                let ineq = self.inequalities.as_ref().context("section [inequalities] is required in inequalities mode")?;
                if ineq.checks.is_empty() {
                    bail!("field `inequalities.checks` is empty");
                }
                if ineq.checks.contains(&InequalityId::L44_1) {
                    if !matches!(self.geometry, Geometry::Annulus { .. }) {
                        bail!("check L44_1 needs `geometry.kind = \"annulus\"`");
                    }
                    if !ineq.eta.is_some_and(|e| e > 0.0) {
                        bail!("field `inequalities.eta` must be positive when L44_1 is selected");
                    }
                }
                if ineq.checks.contains(&InequalityId::Young63) && !ineq.eps.is_some_and(|e| e > 0.0 && e < 1.0) {
                    bail!("field `inequalities.eps` in (0, 1) is required when YOUNG_63 is selected");
                }
            }
        }
        if self.mode == Mode::Asymptotics {
            let a = self.asymptotics.as_ref().context("section [asymptotics] is required in asymptotics mode")?;
            if a.thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
                bail!("field `asymptotics.thresholds` must hold fractions in (0, 1), got {:?}", a.thresholds);
            }
            if !(a.fit_window[0] < a.fit_window[1]) {
                bail!("field `asymptotics.fit_window` must be increasing, got {:?}", a.fit_window);
            }
        }
        self.grid()?;
        Ok(())
    }

    /// Solver parameters for one value of `eps`.
    pub fn sim_params(&self, eps: f64) -> Result<SimParams> {
        let sim = self.sim()?;
        let dt_policy = match (sim.dt, sim.cfl_safety) {
            (Some(dt), None) => DtPolicy::Fixed { dt },
            (None, Some(safety)) => DtPolicy::Cfl { safety },
            _ => bail!("exactly one of `sim.dt` and `sim.cfl_safety` must be set"),
        };
        let dt_max = match (dt_policy, sim.dt_max) {
            (DtPolicy::Fixed { dt }, None) => dt,
            (_, Some(m)) => m,
            (DtPolicy::Cfl { .. }, None) => bail!("field `sim.dt_max` is required with `sim.cfl_safety`"),
        };
        if sim.diag_cadence == 0 {
            bail!("field `sim.diag_cadence` must be positive");
        }
        let lemma13 = match (sim.lemma13_p, sim.lemma13_delta) {
            (Some(p), Some(delta)) => Some(Lemma13Params { p, delta }),
            (None, None) => None,
            _ => bail!("fields `sim.lemma13_p` and `sim.lemma13_delta` must be given together"),
        };
        let params = SimParams {
            eps,
            dt_policy,
            dt_max,
            t_end: sim.t_end,
            diag_cadence: sim.diag_cadence,
            lemma13,
            cg_tol: sim.cg_tol.unwrap_or(DEFAULT_CG_TOL),
        };
        params.validate().context("section [sim]")?;
        Ok(params)
    }

    /// Initial pair for `eps`, mollified unless `sim.mollify = false`.
    pub fn initial_pair(&self, grid: &Grid, eps: f64) -> Result<InitialPair> {
        let scenario = self.scenario()?;
        let (u, v) = scenario.raw(grid).context("section [initial]")?;
        let pair = if self.sim()?.mollify.unwrap_or(true) {
            InitialPair::mollified(grid, &u, &v, eps)
        } else {
            InitialPair::new(grid, u, v)
        };
        pair.with_context(|| format!("initial data for scenario {}", scenario.name()))
    }

    pub fn lemma13(&self) -> Option<Lemma13Params> {
        let sim = self.sim.as_ref()?;
        Some(Lemma13Params { p: sim.lemma13_p?, delta: sim.lemma13_delta? })
    }

    pub fn trace_samples(&self) -> usize {
        self.inequalities.as_ref().and_then(|i| i.trace_samples).unwrap_or(TRACE_SAMPLES)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
mode = "simulate"
seed = 3

[geometry]
kind = "interval"
length = 1.0

[resolution]
n0 = 32

[initial]
scenario = "homogeneous"
mu = 1.0
v = 2.0

[sim]
eps = 0.1
t_end = 0.5
dt = 1e-3
diag_cadence = 10
"#;

    #[test]
    fn parses_complete_config() {
        let cfg = ExperimentConfig::from_toml_str(BASE).unwrap();
        assert_eq!(cfg.mode, Mode::Simulate);
        assert_eq!(cfg.resolution, Resolution::line(32));
        let p = cfg.sim_params(0.1).unwrap();
        assert_eq!(p.dt_policy, DtPolicy::Fixed { dt: 1e-3 });
        assert_eq!(p.dt_max, 1e-3);
    }

    #[test]
    fn missing_eps_names_the_field() {
        let text = BASE.replace("eps = 0.1\n", "");
        let err = format!("{:#}", ExperimentConfig::from_toml_str(&text).unwrap_err());
        assert!(err.contains("sim.eps"), "{err}");
    }

    #[test]
    fn missing_t_end_and_resolution_are_parse_errors() {
        let err = format!("{:#}", ExperimentConfig::from_toml_str(&BASE.replace("t_end = 0.5\n", "")).unwrap_err());
        assert!(err.contains("t_end"), "{err}");
        let err = format!("{:#}", ExperimentConfig::from_toml_str(&BASE.replace("n0 = 32\n", "")).unwrap_err());
        assert!(err.contains("n0"), "{err}");
    }

    #[test]
    fn unknown_field_reports_line() {
        let text = BASE.replace("diag_cadence = 10", "diag_cadence = 10\nbogus = 1");
        let err = format!("{:#}", ExperimentConfig::from_toml_str(&text).unwrap_err());
        assert!(err.contains("bogus") && err.contains("line"), "{err}");
    }

    #[test]
    fn dt_policy_must_be_unique() {
        let text = BASE.replace("dt = 1e-3", "dt = 1e-3\ncfl_safety = 0.5");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
        let text = BASE.replace("dt = 1e-3", "cfl_safety = 0.5");
        let err = format!("{:#}", ExperimentConfig::from_toml_str(&text).unwrap_err());
        assert!(err.contains("dt_max"), "{err}");
    }

    #[test]
    fn sweep_requires_ladder_and_fixed_step() {
        let text = BASE.replace("mode = \"simulate\"", "mode = \"eps_sweep\"").replace("eps = 0.1\n", "")
            + "\n[sweep]\neps = [0.1, 0.05]\nsample_every = 10\n";
        ExperimentConfig::from_toml_str(&text).unwrap();
        let up = text.replace("[0.1, 0.05]", "[0.05, 0.1]");
        assert!(format!("{:#}", ExperimentConfig::from_toml_str(&up).unwrap_err()).contains("non-increasing"));
    }

    #[test]
    fn inequality_checks_parse_by_label() {
        let text = r#"
mode = "inequalities"
[geometry]
kind = "annulus"
r0 = 1.0
r1 = 2.0
[resolution]
n0 = 8
n1 = 24
[inequalities]
seeds = 4
checks = ["L33_1", "L44_1", "ODE_CMP"]
eta = 0.1
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.inequalities.unwrap().checks, vec![InequalityId::L33_1, InequalityId::L44_1, InequalityId::OdeCmp]);
        assert!(ExperimentConfig::from_toml_str(&text.replace("eta = 0.1\n", "")).is_err());
    }
}
