//! Time stepping for the regularized system.
//!
//! One step:
//! 1. accumulate the tracked time integrals at the current state (left endpoint);
//! 2. `u <- u + dt div(grad u - A(u) grad v)` with `A(u) = u/(1+eps u)^2` taken
//!    from the upwind cell, then clip negatives and rescale the positive part;
//! 3. `v <- (V + dt K)^{-1} V v`, then `v <- v exp(-dt u/(1+eps u))` with the new `u`.

mod checkpoint;
mod linear;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_COLUMNS};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsRecord, Integrands};
use crate::error::{Error, Result};
use crate::grid::{FaceField, Grid, ScalarField};
use crate::initial::InitialPair;
use linear::ImplicitDiffusion;

/// Default relative residual for the implicit diffusion solve.
pub const DEFAULT_CG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum DtPolicy {
    Fixed { dt: f64 },
    Cfl { safety: f64 },
}

/// Tracks `int (u+1)^p / (delta - v)` once `max v < delta / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lemma13Params {
    pub p: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub eps: f64,
    pub dt_policy: DtPolicy,
    /// Upper bound on any step.
    pub dt_max: f64,
    pub t_end: f64,
    /// Steps between diagnostics records.
    pub diag_cadence: usize,
    #[serde(default)]
    pub lemma13: Option<Lemma13Params>,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
}

fn default_cg_tol() -> f64 {
    DEFAULT_CG_TOL
}

impl SimParams {
    pub fn fixed(eps: f64, dt: f64, t_end: f64, diag_cadence: usize) -> Self {
        SimParams {
            eps,
            dt_policy: DtPolicy::Fixed { dt },
            dt_max: dt,
            t_end,
            diag_cadence,
            lemma13: None,
            cg_tol: DEFAULT_CG_TOL,
        }
    }

    pub fn cfl(eps: f64, safety: f64, dt_max: f64, t_end: f64, diag_cadence: usize) -> Self {
        SimParams {
            eps,
            dt_policy: DtPolicy::Cfl { safety },
            dt_max,
            t_end,
            diag_cadence,
            lemma13: None,
            cg_tol: DEFAULT_CG_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Precondition(m));
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.dt_max > 0.0) {
            return bad(format!("dt_max must be positive, got {}", self.dt_max));
        }
        match self.dt_policy {
            DtPolicy::Fixed { dt } if !(dt > 0.0) => return bad(format!("dt must be positive, got {dt}")),
            DtPolicy::Cfl { safety } if !(safety > 0.0 && safety <= 1.0) => {
                return bad(format!("cfl safety must lie in (0, 1], got {safety}"))
            }
            _ => {}
        }
        if self.diag_cadence == 0 {
            return bad("diag_cadence must be at least 1".into());
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return bad(format!("cg_tol must lie in (0, 1), got {}", self.cg_tol));
        }
        Ok(())
    }
}

/// Time integrals `int_0^t int_Omega ...`, left-endpoint in time except
/// `consumption`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cumulative {
    pub grad_v_sq: f64,
    /// Sum of the signal mass removed by each reaction substep, so that
    /// `int v(t) + consumption = int v0` holds to solver tolerance.
    pub consumption: f64,
    pub u_dev_l1: f64,
    pub fisher_u: f64,
    pub hess_v_sq: f64,
    pub weighted_grad_v: f64,
    /// Sum of the three dissipation terms.
    pub dissipation: f64,
}

impl Cumulative {
    fn add(&mut self, i: &Integrands, dt: f64) {
        self.grad_v_sq += dt * i.grad_v_sq;
        self.u_dev_l1 += dt * i.u_dev_l1;
        self.fisher_u += dt * i.fisher_u;
        self.hess_v_sq += dt * i.hess_v_sq;
        self.weighted_grad_v += dt * i.weighted_grad_v;
        self.dissipation += dt * i.dissipation();
    }
}

/// Running totals of positivity clipping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClipLog {
    pub events: u64,
    /// Total redistributed mass.
    pub total_mass: f64,
    pub max_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClipEvent {
    pub step: u64,
    pub t: f64,
    pub cells: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub steps: u64,
    pub u: ScalarField,
    pub v: ScalarField,
    pub mu: f64,
    pub cumulative: Cumulative,
    pub clip: ClipLog,
}

impl SimState {
    pub fn new(initial: &InitialPair) -> Self {
        SimState {
            t: 0.0,
            steps: 0,
            u: initial.u0.clone(),
            v: initial.v0.clone(),
            mu: initial.mu,
            cumulative: Cumulative::default(),
            clip: ClipLog::default(),
        }
    }
}

#[inline]
fn chemotactic_coefficient(u: f64, eps: f64) -> f64 {
    let d = 1.0 + eps * u;
    u / (d * d)
}

/// `grad u - A(u) grad v` on faces, `A` from the donor cell in the drift
/// direction `+grad v`. Zero on boundary faces.
pub fn flux_u(grid: &Grid, u: &ScalarField, v: &ScalarField, eps: f64) -> FaceField {
    let (u, v) = (u.values(), v.values());
    grid.map_interior_faces(|l, r, dist| {
        let gu = (u[r] - u[l]) / dist;
        let gv = (v[r] - v[l]) / dist;
        let donor = if gv > 0.0 { u[l] } else { u[r] };
        gu - chemotactic_coefficient(donor, eps) * gv
    })
}

/// Largest face drift speed `|grad v| / (1+eps u_donor)^2`.
pub fn max_drift(grid: &Grid, u: &ScalarField, v: &ScalarField, eps: f64) -> f64 {
    let (u, v) = (u.values(), v.values());
    grid.map_interior_faces(|l, r, dist| {
        let gv = (v[r] - v[l]) / dist;
        let donor = if gv > 0.0 { u[l] } else { u[r] };
        let d = 1.0 + eps * donor;
        gv.abs() / (d * d)
    })
    .max_abs()
}

/// `safety * min(h^2 / (2n), h / max drift)`, capped at `dt_max`.
pub fn cfl_dt(grid: &Grid, state: &SimState, eps: f64, safety: f64, dt_max: f64) -> f64 {
    let h = grid.min_spacing();
    let diffusive = h * h / (2.0 * grid.dimension() as f64);
    let w = max_drift(grid, &state.u, &state.v, eps);
    let bound = if w > 0.0 { diffusive.min(h / w) } else { diffusive };
    (safety * bound).min(dt_max)
}

/// Reusable stepping workspace for one grid.
pub struct Stepper<'g> {
    grid: &'g Grid,
    eps: f64,
    cg_tol: f64,
    diffusion: ImplicitDiffusion,
    vbuf: Vec<f64>,
    volumes: Vec<f64>,
}

/// What happened during one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    pub cg_iterations: usize,
    pub clip: Option<ClipEvent>,
}

impl<'g> Stepper<'g> {
    pub fn new(grid: &'g Grid, params: &SimParams) -> Self {
        Stepper {
            grid,
            eps: params.eps,
            cg_tol: params.cg_tol,
            diffusion: ImplicitDiffusion::new(grid),
            vbuf: vec![0.0; grid.n_cells()],
            volumes: grid.cell_volumes(),
        }
    }

    pub fn step(&mut self, state: &mut SimState, dt: f64) -> Result<StepInfo> {
        let (grid, eps) = (self.grid, self.eps);
        let integrands = Integrands::evaluate(grid, &state.u, &state.v, eps, state.mu);
        state.cumulative.add(&integrands, dt);

        let du = grid.divergence(&flux_u(grid, &state.u, &state.v, eps));
        let mut u: Vec<f64> = state.u.values().iter().zip(du.values()).map(|(a, b)| a + dt * b).collect();
        let clip = self.clip(&mut u, state.steps + 1, state.t + dt);

        let iters = self.diffusion.solve(grid, dt, state.v.values(), &mut self.vbuf, self.cg_tol)?;
        let v: Vec<f64> = self
            .vbuf
            .iter()
            .zip(&u)
            .map(|(&x, &uk)| (x * (-dt * uk / (1.0 + eps * uk)).exp()).max(0.0))
            .collect();
        state.cumulative.consumption += grid.integrate_with(|k| self.vbuf[k] - v[k]);

        let t = state.t + dt;
        if let Some(cell) = u.iter().chain(&v).position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { cell: cell % u.len(), t });
        }
        state.u = ScalarField::new(u);
        state.v = ScalarField::new(v);
        state.t = t;
        state.steps += 1;
        if let Some(ev) = clip {
            state.clip.events += 1;
            state.clip.total_mass += ev.mass;
            state.clip.max_mass = state.clip.max_mass.max(ev.mass);
        }
        Ok(StepInfo { dt, cg_iterations: iters, clip })
    }

    /// Zero negative values and scale the positive part so the integral is unchanged.
    fn clip(&self, u: &mut [f64], step: u64, t: f64) -> Option<ClipEvent> {
        let mut negative = 0.0;
        let mut cells = 0;
        for (x, vol) in u.iter().zip(&self.volumes) {
            if *x < 0.0 {
                negative += vol * *x;
                cells += 1;
            }
        }
        if cells == 0 {
            return None;
        }
        let positive: f64 = u.iter().zip(&self.volumes).filter(|(x, _)| **x > 0.0).map(|(x, v)| x * v).sum();
        let scale = (positive + negative) / positive;
        for x in u.iter_mut() {
            *x = if *x > 0.0 { *x * scale } else { 0.0 };
        }
        Some(ClipEvent { step, t, cells, mass: -negative })
    }
}

/// Advance `state` by one step of size `dt`.
pub fn step(grid: &Grid, state: &SimState, params: &SimParams, dt: f64) -> Result<SimState> {
    let mut next = state.clone();
    Stepper::new(grid, params).step(&mut next, dt)?;
    Ok(next)
}

/// Callbacks invoked by [`run`].
pub trait Hooks {
    /// After every accepted step.
    fn on_step(&mut self, _grid: &Grid, _state: &SimState, _info: &StepInfo) -> Result<()> {
        Ok(())
    }
    /// After every diagnostics record.
    fn on_record(&mut self, _grid: &Grid, _record: &DiagnosticsRecord, _state: &SimState) -> Result<()> {
        Ok(())
    }
}

impl Hooks for () {}

/// Keeps a copy of the state every `every` steps (and the first and last).
#[derive(Debug, Clone, Default)]
pub struct StateRecorder {
    pub every: u64,
    pub states: Vec<SimState>,
}

impl StateRecorder {
    pub fn new(every: u64) -> Self {
        StateRecorder { every: every.max(1), states: Vec::new() }
    }
}

impl Hooks for StateRecorder {
    fn on_step(&mut self, _grid: &Grid, state: &SimState, _info: &StepInfo) -> Result<()> {
        if state.steps % self.every == 0 {
            self.states.push(state.clone());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: SimState,
    pub clip_events: Vec<ClipEvent>,
}

pub fn run(grid: &Grid, initial: &InitialPair, params: &SimParams, hooks: &mut impl Hooks) -> Result<RunOutput> {
    grid.check_field(&initial.u0)?;
    grid.check_field(&initial.v0)?;
    run_from(grid, SimState::new(initial), params, hooks)
}

/// Continue from an existing state (for example a checkpoint) up to `params.t_end`.
pub fn run_from(grid: &Grid, mut state: SimState, params: &SimParams, hooks: &mut impl Hooks) -> Result<RunOutput> {
    params.validate()?;
    let mut stepper = Stepper::new(grid, params);
    let mut records = Vec::new();
    let mut clip_events = Vec::new();
    let wrap = |t: f64| move |e: Error| Error::StepFailed { t, source: Box::new(e) };

    if state.steps == 0 {
        hooks.on_step(grid, &state, &StepInfo { dt: 0.0, cg_iterations: 0, clip: None })?;
        let rec = diagnostics::record(grid, &state, None, params);
        hooks.on_record(grid, &rec, &state)?;
        records.push(rec);
    }
    let stop = params.t_end * (1.0 - 1e-12);
    while state.t < stop {
        let mut dt = match params.dt_policy {
            DtPolicy::Fixed { dt } => dt.min(params.dt_max),
            DtPolicy::Cfl { safety } => cfl_dt(grid, &state, params.eps, safety, params.dt_max),
        };
        // a step within rounding of the remaining time keeps its nominal size
        if params.t_end - state.t < dt * (1.0 - 1e-9) {
            dt = params.t_end - state.t;
        }
        let prev = state.clone();
        let info = stepper.step(&mut state, dt).map_err(wrap(prev.t))?;
        if let Some(ev) = info.clip {
            clip_events.push(ev);
        }
        hooks.on_step(grid, &state, &info)?;
        let last = state.t >= stop;
        if state.steps % params.diag_cadence as u64 == 0 || last {
            let rec = diagnostics::record(grid, &state, Some(&prev), params);
            hooks.on_record(grid, &rec, &state)?;
            records.push(rec);
        }
    }
    Ok(RunOutput { records, final_state: state, clip_events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Geometry, Resolution};
    use std::f64::consts::PI;

    fn interval(n: usize) -> Grid {
        make_grid(Geometry::Interval { length: 1.0 }, Resolution::line(n)).unwrap()
    }

    #[test]
    fn flux_reduces_to_diffusion_for_constant_v() {
        let g = interval(10);
        let u = g.field_from_fn(|p| p.x * p.x);
        let f = flux_u(&g, &u, &g.constant(3.0), 0.1);
        assert_eq!(f, g.gradient(&u));
        assert_eq!(flux_u(&g, &g.constant(0.0), &g.field_from_fn(|p| p.x), 0.1).max_abs(), 0.0);
    }

    /// Two neighbouring cells: `u = (2, 1)`, `v = (1, 3)`, `h = 0.25`, `eps = 0.5`.
    /// grad u = -4, grad v = 8 > 0 so the donor is the left cell:
    /// A(2) = 2 / (1 + 1)^2 = 0.5, flux = -4 - 0.5 * 8 = -8.
    #[test]
    fn two_cell_upwind_flux_by_hand() {
        let g = make_grid(Geometry::Interval { length: 1.0 }, Resolution::line(4)).unwrap();
        let u = ScalarField::new(vec![2.0, 2.0, 1.0, 1.0]);
        let v = ScalarField::new(vec![1.0, 1.0, 3.0, 3.0]);
        let f = flux_u(&g, &u, &v, 0.5);
        assert_eq!(f.axis0, vec![0.0, 0.0, -8.0, 0.0, 0.0]);
        // reversed drift: donor is now the right cell, A(1) = 1 / 1.5^2
        let v2 = ScalarField::new(vec![3.0, 3.0, 1.0, 1.0]);
        let f2 = flux_u(&g, &u, &v2, 0.5);
        assert!((f2.axis0[2] - (-4.0 + 8.0 / 2.25)).abs() < 1e-15);
    }

    #[test]
    fn flux_is_antisymmetric_under_reflection() {
        let g = interval(16);
        let u = g.field_from_fn(|p| 1.0 + p.x);
        let v = g.field_from_fn(|p| (2.0 * p.x).sin());
        let rev = |f: &ScalarField| ScalarField::new(f.values().iter().rev().cloned().collect());
        let a = flux_u(&g, &u, &v, 0.2);
        let b = flux_u(&g, &rev(&u), &rev(&v), 0.2);
        for k in 0..=16 {
            assert_eq!(a.axis0[k], -b.axis0[16 - k]);
        }
    }

    #[test]
    fn cfl_examples() {
        let g = interval(100);
        let init = InitialPair::new(&g, g.constant(1.0), g.constant(1.0)).unwrap();
        let s = SimState::new(&init);
        assert!((cfl_dt(&g, &s, 0.1, 1.0, 1.0) - 5e-5).abs() < 1e-18);
        let g2 = interval(200);
        let s2 = SimState::new(&InitialPair::new(&g2, g2.constant(1.0), g2.constant(1.0)).unwrap());
        assert!((cfl_dt(&g2, &s2, 0.1, 1.0, 1.0) * 4.0 - 5e-5).abs() < 1e-18);
        assert_eq!(cfl_dt(&g, &s, 0.1, 1.0, 1e-6), 1e-6);
        // steep v: h = 0.1, |grad v| = 100 on the middle face, u = 0 there so no damping:
        // advective bound 0.1 / 100 = 1e-3 < diffusive 5e-3
        let g3 = make_grid(Geometry::Interval { length: 0.4 }, Resolution::line(4)).unwrap();
        let s3 = SimState {
            u: g3.constant(0.0),
            v: ScalarField::new(vec![0.0, 0.0, 10.0, 10.0]),
            ..s.clone()
        };
        assert!((cfl_dt(&g3, &s3, 0.1, 0.5, 1.0) - 0.5e-3).abs() < 1e-15);
        // with u = 1 and eps = 1 the speed is 100 / 4 = 25: bound 4e-3
        let s4 = SimState { u: g3.constant(1.0), ..s3 };
        assert!((cfl_dt(&g3, &s4, 1.0, 1.0, 1.0) - 4e-3).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_state_is_exact() {
        let g = make_grid(Geometry::Annulus { r0: 1.0, r1: 2.0 }, Resolution::plane(8, 24)).unwrap();
        let (mu, c, eps) = (1.5, 0.8, 0.1);
        let init = InitialPair::new(&g, g.constant(mu), g.constant(c)).unwrap();
        let params = SimParams::fixed(eps, 1e-3, 1.0, 100);
        let out = run(&g, &init, &params, &mut ()).unwrap();
        let s = &out.final_state;
        assert_eq!(s.steps, 1000);
        let exact = c * (-mu * s.t / (1.0 + eps * mu)).exp();
        assert!(s.u.values().iter().all(|&x| x == mu));
        for &x in s.v.values() {
            assert!((x - exact).abs() <= 1e-10 * exact, "{x} vs {exact}");
        }
        assert_eq!(out.records.len(), 11);
    }

    fn heat_mode_error(n: usize) -> f64 {
        let g = interval(n);
        let (mu, a) = (1.0, 0.5);
        let init = InitialPair::new(&g, g.field_from_fn(|p| mu + a * (PI * p.x).cos()), g.constant(0.0)).unwrap();
        let h = 1.0 / n as f64;
        let t_end = 0.1;
        // dt ~ h^2 so the O(dt) error stays below the spatial one
        let params = SimParams::fixed(0.1, 0.1 * h * h, t_end, 1_000_000);
        let out = run(&g, &init, &params, &mut ()).unwrap();
        let s = out.final_state;
        (0..n)
            .map(|k| (s.u[k] - (mu + a * (-PI * PI * s.t).exp() * (PI * g.coords(k).x).cos())).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn heat_mode_second_order() {
        let (e1, e2, e3) = (heat_mode_error(16), heat_mode_error(32), heat_mode_error(64));
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        assert!(o1 > 1.8 && o2 > 1.8, "{e1} {e2} {e3}");
    }

    #[test]
    fn bump_run_conserves_mass_and_keeps_signs() {
        let g = make_grid(Geometry::Annulus { r0: 1.0, r1: 2.0 }, Resolution::plane(8, 24)).unwrap();
        let raw_u = g.field_from_fn(|p| 0.2 + 3.0 * (-((p.x - 1.5).powi(2) + p.y * p.y) * 8.0).exp());
        let init = InitialPair::mollified(&g, &raw_u, &g.constant(1.0), 0.1).unwrap();
        let params = SimParams::cfl(0.1, 0.5, 1e-2, 0.2, 10);
        struct Check(f64, f64);
        impl Hooks for Check {
            fn on_step(&mut self, g: &Grid, s: &SimState, _: &StepInfo) -> Result<()> {
                assert!((g.integrate(&s.u) - self.0).abs() <= 1e-12 * self.0);
                assert!(s.u.min() >= 0.0 && s.v.min() >= 0.0);
                assert!(s.v.max() <= self.1 + 1e-12);
                self.1 = s.v.max();
                Ok(())
            }
        }
        let mut check = Check(init.mass, init.v_linf);
        let out = run(&g, &init, &params, &mut check).unwrap();
        assert!(check.1 < init.v_linf);
        assert!(out.final_state.cumulative.consumption <= init.v_l1 * (1.0 + 1e-8));
        let balance = g.integrate(&out.final_state.v) + out.final_state.cumulative.consumption;
        assert!((balance - init.v_l1).abs() <= 1e-10 * init.v_l1, "{balance} vs {}", init.v_l1);
    }

    #[test]
    fn params_validation() {
        assert!(SimParams::fixed(0.0, 1e-3, 1.0, 1).validate().is_err());
        assert!(SimParams::fixed(0.1, -1.0, 1.0, 1).validate().is_err());
        assert!(SimParams::fixed(0.1, 1e-3, 1.0, 0).validate().is_err());
        assert!(SimParams::cfl(0.1, 1.5, 1e-3, 1.0, 1).validate().is_err());
        assert!(SimParams::cfl(0.1, 0.5, 1e-3, 1.0, 1).validate().is_ok());
    }

    #[test]
    fn step_rejects_nan() {
        let g = interval(8);
        let mut u = g.constant(1.0);
        u.values_mut()[2] = f64::NAN;
        let s = SimState { u, ..SimState::new(&InitialPair::new(&g, g.constant(1.0), g.constant(1.0)).unwrap()) };
        assert!(matches!(step(&g, &s, &SimParams::fixed(0.1, 1e-4, 1.0, 1), 1e-4), Err(Error::NonFinite { .. })));
    }
}
