//! Energy, dissipation, boundary and integrability functionals evaluated on
//! solver states, plus trajectory-level fits and weak-form residuals.

mod fit;
mod monitor;
mod record;
mod weak;

pub use fit::{
    convergence_report, first_passage, fit_power_law, growth_fit, ConvergenceReport, FitStatus, GrowthFit, GrowthQuantity,
    PassageTime, ThresholdPassage, MIN_FIT_SAMPLES, PASSAGE_THRESHOLDS,
};
pub use record::{record, write_records_csv, DiagnosticsRecord, RECORD_COLUMNS};
pub use monitor::{InvariantMonitor, Lemma13Monitor};
pub use weak::{time_integral, weak_residual, SpaceTimeTest};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, Sym2};
use crate::initial::xlogx;
use crate::solver::SimState;

/// Cells with `u = 0` are allowed in the Fisher information only if
/// `|grad u|^2` is below this.
pub const FISHER_ZERO_TOL: f64 = 1e-24;

#[inline]
fn sq(g: [f64; 2]) -> f64 {
    g[0] * g[0] + g[1] * g[1]
}

/// `int u ln(u / mu) + 1/2 int |grad v|^2 / v`.
pub fn energy_f(grid: &Grid, u: &ScalarField, v: &ScalarField, mu: f64) -> Result<f64> {
    v.check_positive()?;
    let gsq = grid.grad_sq(v);
    let lnmu = mu.ln();
    Ok(grid.integrate_with(|k| xlogx(u[k]) - u[k] * lnmu + 0.5 * gsq[k] / v[k]))
}

/// The three dissipation integrals: `int |grad u|^2 / u`, `int v |D^2 ln v|^2`
/// and `1/2 int u/(1+eps u) |grad v|^2 / v`.
pub fn dissipation_d(grid: &Grid, u: &ScalarField, v: &ScalarField, eps: f64) -> Result<[f64; 3]> {
    v.check_positive()?;
    u.check_nonnegative()?;
    let gu = grid.cell_gradient(u);
    if let Some(cell) = (0..u.len()).find(|&k| u[k] == 0.0 && sq(gu[k]) > FISHER_ZERO_TOL) {
        return Err(Error::DegenerateFisher { cell, grad_sq: sq(gu[cell]) });
    }
    let gv = grid.grad_sq(v);
    let hlog = grid.hessian(&v.map(f64::ln));
    let t1 = grid.integrate_with(|k| if u[k] > 0.0 { sq(gu[k]) / u[k] } else { 0.0 });
    let t2 = grid.integrate_with(|k| v[k] * hlog[k].norm_sq());
    let t3 = 0.5 * grid.integrate_with(|k| u[k] / (1.0 + eps * u[k]) * gv[k] / v[k]);
    Ok([t1, t2, t3])
}

/// `1/2 int_{boundary} (1/v) d|grad v|^2/d nu`, the right-hand side of the energy identity.
pub fn boundary_term(grid: &Grid, v: &ScalarField) -> Result<f64> {
    v.check_positive()?;
    let d = grid.boundary_normal_derivative_of_gradsq(v);
    let data: Vec<f64> = grid.boundary_faces().iter().zip(&d).map(|(b, x)| x / v[b.cell]).collect();
    Ok(0.5 * grid.boundary_integrate(&data))
}

/// `[F(after) - F(before)]/dt + D(before) - boundary_term(before)`.
pub fn energy_residual(grid: &Grid, before: &SimState, after: &SimState, eps: f64) -> Result<f64> {
    let dt = after.t - before.t;
    if !(dt > 0.0) {
        return Err(Error::Precondition("energy_residual needs consecutive states with t_after > t_before".into()));
    }
    let f0 = energy_f(grid, &before.u, &before.v, before.mu)?;
    let f1 = energy_f(grid, &after.u, &after.v, after.mu)?;
    let d: f64 = dissipation_d(grid, &before.u, &before.v, eps)?.iter().sum();
    let b = boundary_term(grid, &before.v)?;
    Ok((f1 - f0) / dt + d - b)
}

/// All pointwise-in-time integrals the solver accumulates each step. Cells
/// where a quotient is undefined (`u = 0` or `v = 0`) contribute zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Integrands {
    /// Face-based `int |grad v|^2`.
    pub grad_v_sq: f64,
    pub consumption: f64,
    pub u_dev_l1: f64,
    pub fisher_u: f64,
    pub hess_v_sq: f64,
    /// `int u/(1+eps u) |grad v|^2 / v` (no factor 1/2).
    pub weighted_grad_v: f64,
    /// `int v |D^2 ln v|^2`, zero when `v` is not strictly positive.
    pub hess_log_v: f64,
}

impl Integrands {
    pub fn evaluate(grid: &Grid, u: &ScalarField, v: &ScalarField, eps: f64, mu: f64) -> Self {
        let gu = grid.cell_gradient(u);
        let gv = grid.cell_gradient(v);
        let hv = grid.hessian(v);
        let positive_v = v.min() > 0.0;
        let hess_log_v = if positive_v {
            let hl = grid.hessian(&v.map(f64::ln));
            grid.integrate_with(|k| v[k] * hl[k].norm_sq())
        } else {
            0.0
        };
        Integrands {
            grad_v_sq: grid.dirichlet_energy(v),
            consumption: grid.integrate_with(|k| u[k] * v[k] / (1.0 + eps * u[k])),
            u_dev_l1: grid.integrate_with(|k| (u[k] - mu).abs()),
            fisher_u: grid.integrate_with(|k| if u[k] > 0.0 { sq(gu[k]) / u[k] } else { 0.0 }),
            hess_v_sq: grid.integrate_with(|k| hv[k].norm_sq()),
            weighted_grad_v: grid
                .integrate_with(|k| if v[k] > 0.0 { u[k] / (1.0 + eps * u[k]) * sq(gv[k]) / v[k] } else { 0.0 }),
            hess_log_v,
        }
    }

    /// Sum of the three dissipation terms.
    pub fn dissipation(&self) -> f64 {
        self.fisher_u + self.hess_log_v + 0.5 * self.weighted_grad_v
    }
}

/// Quantities appearing in the differential inequality that controls the
/// quasi-energy by `int |grad v|`. The inequality itself is not asserted:
/// its constants are not explicit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Lemma4Report {
    pub mass: f64,
    pub fisher_u: f64,
    pub u_dev_l1_sq: f64,
    /// `int |D^2 v|^2 / v`
    pub hess_v_over_v: f64,
    pub weighted_grad_v: f64,
    /// Forward-difference estimate of `dF/dt`, when a previous state is supplied.
    pub df_dt: Option<f64>,
    /// `int |grad v|`
    pub grad_v_l1: f64,
}

pub fn lemma4_report(grid: &Grid, state: &SimState, prev: Option<&SimState>, eps: f64) -> Result<Lemma4Report> {
    let (u, v, mu) = (&state.u, &state.v, state.mu);
    v.check_positive()?;
    let gu = grid.cell_gradient(u);
    let gv = grid.cell_gradient(v);
    let hv = grid.hessian(v);
    let dev = grid.integrate_with(|k| (u[k] - mu).abs());
    let df_dt = match prev {
        Some(p) => {
            let dt = state.t - p.t;
            Some((energy_f(grid, u, v, mu)? - energy_f(grid, &p.u, &p.v, p.mu)?) / dt)
        }
        None => None,
    };
    Ok(Lemma4Report {
        mass: grid.integrate(u),
        fisher_u: grid.integrate_with(|k| if u[k] > 0.0 { sq(gu[k]) / u[k] } else { 0.0 }),
        u_dev_l1_sq: dev * dev,
        hess_v_over_v: grid.integrate_with(|k| hv[k].norm_sq() / v[k]),
        weighted_grad_v: grid.integrate_with(|k| u[k] / (1.0 + eps * u[k]) * sq(gv[k]) / v[k]),
        df_dt,
        grad_v_l1: grid.integrate_with(|k| sq(gv[k]).sqrt()),
    })
}

impl Lemma4Report {
    /// `((int |u - mu|)^2, c1^2 int u int |grad u|^2/u)`: the L1 Poincaré
    /// inequality with constant `c1` followed by Cauchy-Schwarz.
    pub fn poincare_chain(&self, c1: f64) -> (f64, f64) {
        (self.u_dev_l1_sq, c1 * c1 * self.mass * self.fisher_u)
    }
}

/// Admissibility expression for `delta`; must be `<= 0`.
pub fn lemma13_gate(p: f64, delta: f64) -> f64 {
    let a = 2.0 * p + delta * p * (p - 1.0);
    a * a / (3.0 * p * (p - 1.0)) + p * delta - 2.0
}

/// `int (u + 1)^p / (delta - v)` under `p > 3`, the `delta` gate, and `max v < delta/2`.
pub fn lemma13_functional(grid: &Grid, u: &ScalarField, v: &ScalarField, p: f64, delta: f64) -> Result<f64> {
    if !(p > 3.0) {
        return Err(Error::Precondition(format!("the functional int (u+1)^p/(delta-v) needs p > 3, got {p}")));
    }
    if !(delta > 0.0) || lemma13_gate(p, delta) > 0.0 {
        return Err(Error::Precondition(format!(
            "delta = {delta} fails the admissibility gate for p = {p} (value {:e})",
            lemma13_gate(p, delta)
        )));
    }
    let vmax = v.max();
    if !(vmax < 0.5 * delta) {
        return Err(Error::Precondition(format!("max v = {vmax} is not below delta/2 = {}", 0.5 * delta)));
    }
    Ok(grid.integrate_with(|k| (u[k] + 1.0).powf(p) / (delta - v[k])))
}

/// Largest admissible `delta` for `p`, found by bisection on the gate.
pub fn lemma13_max_delta(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lemma13_gate(p, mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Squared Frobenius norms of the Hessian per cell.
pub fn hessian_sq(grid: &Grid, f: &ScalarField) -> Vec<f64> {
    grid.hessian(f).iter().map(Sym2::norm_sq).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Geometry, Resolution};
    use std::f64::consts::{LN_2, PI};

    fn interval(n: usize) -> Grid {
        make_grid(Geometry::Interval { length: 1.0 }, Resolution::line(n)).unwrap()
    }

    #[test]
    fn homogeneous_energy_and_dissipation_vanish() {
        let g = make_grid(Geometry::Annulus { r0: 1.0, r1: 2.0 }, Resolution::plane(8, 24)).unwrap();
        let u = g.constant(1.3);
        let v = g.constant(0.4);
        assert!(energy_f(&g, &u, &v, 1.3).unwrap().abs() < 1e-13);
        assert_eq!(dissipation_d(&g, &u, &v, 0.1).unwrap(), [0.0, 0.0, 0.0]);
        assert_eq!(boundary_term(&g, &v).unwrap(), 0.0);
    }

    #[test]
    fn two_level_entropy() {
        let g = interval(100);
        let mu = 0.7;
        let u = g.field_from_fn(|p| if p.x < 0.5 { 2.0 * mu } else { 0.0 });
        let f = energy_f(&g, &u, &g.constant(1.0), mu).unwrap();
        assert!((f - mu * LN_2).abs() < 1e-14, "{f}");
    }

    #[test]
    fn energy_rejects_nonpositive_v() {
        let g = interval(10);
        let mut v = g.constant(1.0);
        v.values_mut()[3] = 0.0;
        match energy_f(&g, &g.constant(1.0), &v, 1.0) {
            Err(Error::NonPositive { cell, .. }) => assert_eq!(cell, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_v_leaves_only_fisher_term() {
        let g = interval(64);
        let u = g.field_from_fn(|p| 1.0 + 0.5 * (PI * p.x).cos());
        let d = dissipation_d(&g, &u, &g.constant(2.0), 0.1).unwrap();
        assert!(d[0] > 0.0);
        assert_eq!(d[1], 0.0);
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn fisher_rejects_zero_with_gradient() {
        let g = interval(10);
        let u = g.field_from_fn(|p| if p.x < 0.5 { 1.0 } else { 0.0 });
        assert!(matches!(dissipation_d(&g, &u, &g.constant(1.0), 0.1), Err(Error::DegenerateFisher { .. })));
    }

    /// `int v |(ln v)''|^2` for `v = 2 + cos(pi x)` by Simpson quadrature.
    #[test]
    fn hess_log_term_matches_quadrature() {
        let v_of = |x: f64| 2.0 + (PI * x).cos();
        let m = 20000;
        let hq = 1.0 / m as f64;
        let integrand = |x: f64| {
            let v = v_of(x);
            let d1 = -PI * (PI * x).sin();
            let d2 = -PI * PI * (PI * x).cos();
            let l2 = d2 / v - (d1 / v).powi(2);
            v * l2 * l2
        };
        let simpson: f64 = (0..=m)
            .map(|k| {
                let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                w * integrand(k as f64 * hq)
            })
            .sum::<f64>()
            * hq
            / 3.0;
        let g = interval(200);
        let d = dissipation_d(&g, &g.constant(1.0), &g.field_from_fn(|p| v_of(p.x)), 0.1).unwrap();
        assert!((d[1] - simpson).abs() <= 0.02 * simpson, "{} vs {simpson}", d[1]);
    }

    #[test]
    fn interval_boundary_term_is_zero() {
        let g = interval(50);
        let v = g.field_from_fn(|p| 1.0 + p.x * p.x);
        assert_eq!(boundary_term(&g, &v).unwrap(), 0.0);
    }

    #[test]
    fn lemma13_gate_values() {
        // p = 4, delta = 1: (8 + 12)^2 / 36 + 4 - 2 > 0
        assert!((lemma13_gate(4.0, 1.0) - (400.0 / 36.0 + 2.0)).abs() < 1e-12);
        assert!(lemma13_gate(4.0, 0.01) < 0.0);
        let d = lemma13_max_delta(4.0);
        assert!(d > 0.01 && d < 0.03 && lemma13_gate(4.0, d) <= 0.0);
    }

    #[test]
    fn lemma13_functional_examples() {
        let g = interval(20);
        let z = g.constant(0.0);
        let delta = 0.01;
        let val = lemma13_functional(&g, &z, &z, 4.0, delta).unwrap();
        assert!((val - 1.0 / delta).abs() < 1e-9);
        assert!(lemma13_functional(&g, &z, &z, 4.0, 1.0).is_err());
        assert!(lemma13_functional(&g, &z, &z, 3.0, 0.01).is_err());
        assert!(lemma13_functional(&g, &z, &g.constant(0.006), 4.0, 0.01).is_err());
    }
}
