use serde::Serialize;

use super::lemma13_functional;
use crate::error::Result;
use crate::grid::Grid;
use crate::solver::{Hooks, Lemma13Params, SimState, StepInfo};

/// Per-step structural checks: mass drift, monotonicity of the signal norms
/// and signs. Norm increases are relative to the initial norm.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct InvariantMonitor {
    pub steps: u64,
    pub mass0: f64,
    /// `max_t |int u(t) - int u0| / int u0`
    pub max_mass_drift: f64,
    pub v_norms0: [f64; 3],
    /// Largest single-step increase of `||v||_1, ||v||_2, ||v||_inf`.
    pub max_v_increase: [f64; 3],
    pub min_u: f64,
    pub min_v: f64,
    #[serde(skip)]
    prev: Option<[f64; 3]>,
}

fn v_norms(grid: &Grid, s: &SimState) -> [f64; 3] {
    let v = &s.v;
    [grid.integrate_with(|k| v[k].abs()), grid.integrate_with(|k| v[k] * v[k]).sqrt(), v.max_abs()]
}

impl InvariantMonitor {
    pub fn new() -> Self {
        InvariantMonitor { min_u: f64::INFINITY, min_v: f64::INFINITY, ..Default::default() }
    }

    /// Whether every per-step norm increase stays within `slack * initial norm`.
    pub fn v_monotone(&self, slack: f64) -> [bool; 3] {
        let mut out = [true; 3];
        for i in 0..3 {
            out[i] = self.max_v_increase[i] <= slack * self.v_norms0[i].max(f64::MIN_POSITIVE);
        }
        out
    }
}

impl Hooks for InvariantMonitor {
    fn on_step(&mut self, grid: &Grid, state: &SimState, _info: &StepInfo) -> Result<()> {
        let mass = grid.integrate(&state.u);
        let norms = v_norms(grid, state);
        match self.prev {
            None => {
                self.mass0 = mass;
                self.v_norms0 = norms;
            }
            Some(p) => {
                self.steps += 1;
                self.max_mass_drift = self.max_mass_drift.max((mass - self.mass0).abs() / self.mass0);
                for i in 0..3 {
                    self.max_v_increase[i] = self.max_v_increase[i].max(norms[i] - p[i]);
                }
            }
        }
        self.prev = Some(norms);
        self.min_u = self.min_u.min(state.u.min());
        self.min_v = self.min_v.min(state.v.min());
        Ok(())
    }
}

/// Tracks `int (u+1)^p / (delta - v)` on every step once `max v < delta/2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma13Monitor {
    pub params: Lemma13Params,
    pub first_active: Option<f64>,
    pub active_steps: u64,
    pub first_value: Option<f64>,
    pub last_value: Option<f64>,
    /// Largest relative single-step increase.
    pub max_rel_increase: f64,
}

impl Lemma13Monitor {
    pub fn new(params: Lemma13Params) -> Self {
        Lemma13Monitor { params, first_active: None, active_steps: 0, first_value: None, last_value: None, max_rel_increase: 0.0 }
    }
}

impl Hooks for Lemma13Monitor {
    fn on_step(&mut self, grid: &Grid, state: &SimState, _info: &StepInfo) -> Result<()> {
        if !(state.v.max_abs() < 0.5 * self.params.delta) {
            return Ok(());
        }
        let value = lemma13_functional(grid, &state.u, &state.v, self.params.p, self.params.delta)?;
        if let Some(prev) = self.last_value {
            self.max_rel_increase = self.max_rel_increase.max((value - prev) / prev);
            self.active_steps += 1;
        } else {
            self.first_active = Some(state.t);
            self.first_value = Some(value);
        }
        self.last_value = Some(value);
        Ok(())
    }
}

/// Runs two hooks in sequence.
impl<A: Hooks, B: Hooks> Hooks for (A, B) {
    fn on_step(&mut self, grid: &Grid, state: &SimState, info: &StepInfo) -> Result<()> {
        self.0.on_step(grid, state, info)?;
        self.1.on_step(grid, state, info)
    }
    fn on_record(&mut self, grid: &Grid, record: &super::DiagnosticsRecord, state: &SimState) -> Result<()> {
        self.0.on_record(grid, record, state)?;
        self.1.on_record(grid, record, state)
    }
}

impl<H: Hooks> Hooks for Option<H> {
    fn on_step(&mut self, grid: &Grid, state: &SimState, info: &StepInfo) -> Result<()> {
        match self {
            Some(h) => h.on_step(grid, state, info),
            None => Ok(()),
        }
    }
    fn on_record(&mut self, grid: &Grid, record: &super::DiagnosticsRecord, state: &SimState) -> Result<()> {
        match self {
            Some(h) => h.on_record(grid, record, state),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Geometry, Resolution};
    use crate::initial::InitialPair;
    use crate::solver::{run, SimParams, StateRecorder};

    #[test]
    fn monitor_on_bump_run() {
        let g = make_grid(Geometry::Interval { length: 1.0 }, Resolution::line(64)).unwrap();
        let raw = g.field_from_fn(|p| 0.2 + 4.0 * (-30.0 * (p.x - 0.3).powi(2)).exp());
        let init = InitialPair::mollified(&g, &raw, &g.field_from_fn(|p| 0.5 + 0.3 * p.x), 0.1).unwrap();
        let mut hooks = (InvariantMonitor::new(), StateRecorder::new(10));
        run(&g, &init, &SimParams::cfl(0.1, 0.5, 1e-3, 0.2, 50), &mut hooks).unwrap();
        let m = &hooks.0;
        assert!(m.steps > 0 && m.max_mass_drift <= 1e-12);
        assert_eq!(m.v_monotone(1e-10), [true; 3]);
        assert!(m.min_u >= 0.0 && m.min_v > 0.0);
        assert_eq!(hooks.1.states[0].steps, 0);
    }

    #[test]
    fn lemma13_monitor_tracks_small_signal() {
        let g = make_grid(Geometry::Interval { length: 1.0 }, Resolution::line(32)).unwrap();
        let init = InitialPair::new(&g, g.field_from_fn(|p| 1.0 + 0.5 * (std::f64::consts::PI * p.x).cos()), g.constant(0.004))
            .unwrap();
        let mut m = Lemma13Monitor::new(Lemma13Params { p: 4.0, delta: 0.01 });
        run(&g, &init, &SimParams::fixed(0.1, 1e-4, 0.05, 100), &mut m).unwrap();
        assert_eq!(m.first_active, Some(0.0));
        assert!(m.active_steps >= 499);
        assert!(m.max_rel_increase <= 1e-8, "{}", m.max_rel_increase);
        assert!(m.last_value.unwrap() < m.first_value.unwrap());
    }
}
