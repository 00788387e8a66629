//! Comparison bound for `y' <= b - a y^lambda`: any nonnegative solution obeys
//! `y(t) <= C` for `t > tau` with
//! `C = max{(2b/a)^(1/lambda), ((lambda-1) a tau / 2)^(-1/(lambda-1))}`.
//!
//! Above `(2b/a)^(1/lambda)` the right-hand side is at most `-(a/2) y^lambda`,
//! whose solution from `y(0) = +inf` is `((lambda-1) a t / 2)^(-1/(lambda-1))`.

use serde::Serialize;

use super::{InequalityId, InequalityReport};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Parameter values swept for `a`, `b` and `tau`.
pub const ODE_SWEEP_VALUES: [f64; 3] = [0.5, 1.0, 2.0];
pub const ODE_SWEEP_LAMBDAS: [f64; 3] = [1.5, 2.0, 3.0];
/// Initial values relative to `C` in the sweep.
pub const ODE_SWEEP_Y0_FACTORS: [f64; 3] = [1e-3, 1.0, 1e3];
/// Relative slack granted to the integrator.
pub const ODE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeParams {
    pub a: f64,
    pub b: f64,
    pub tau: f64,
    pub lambda: f64,
    pub y0: Vec<f64>,
}

impl OdeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b >= 0.0 && self.tau > 0.0 && self.lambda > 1.0) {
            return Err(Error::Precondition(format!(
                "need a > 0, b >= 0, tau > 0, lambda > 1; got a = {}, b = {}, tau = {}, lambda = {}",
                self.a, self.b, self.tau, self.lambda
            )));
        }
        if let Some(y) = self.y0.iter().find(|y| !(**y > 0.0 && y.is_finite())) {
            return Err(Error::Precondition(format!("initial values must be positive, got {y}")));
        }
        Ok(())
    }

    pub fn bound(&self) -> f64 {
        ode_bound(self.a, self.b, self.tau, self.lambda)
    }

    fn label(&self) -> String {
        format!("a={};b={};tau={};lambda={}", self.a, self.b, self.tau, self.lambda)
    }
}

pub fn ode_bound(a: f64, b: f64, tau: f64, lambda: f64) -> f64 {
    let stationary = (2.0 * b / a).powf(1.0 / lambda);
    let decay = ((lambda - 1.0) * a * tau / 2.0).powf(-1.0 / (lambda - 1.0));
    stationary.max(decay)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub rejected: usize,
}

/// One step of the L-stable two-stage SDIRK scheme with `gamma = 1 - 1/sqrt 2`
/// for `y' = b - a y^lambda`; stage equations solved by Newton.
fn sdirk_step(a: f64, b: f64, lambda: f64, y: f64, h: f64) -> Option<f64> {
    let gamma = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
    let f = |y: f64| b - a * y.max(0.0).powf(lambda);
    let df = |y: f64| -a * lambda * y.max(0.0).powf(lambda - 1.0);
    let solve = |c: f64| -> Option<f64> {
        let mut x = c.max(0.0);
        for _ in 0..100 {
            let g = x - c - h * gamma * f(x);
            let dg = 1.0 - h * gamma * df(x);
            let next = (x - g / dg).max(0.0);
            if (next - x).abs() <= 1e-15 * next.abs().max(1e-300) {
                return Some(next);
            }
            x = next;
        }
        None
    };
    let y1 = solve(y)?;
    let y2 = solve(y + h * (1.0 - gamma) * f(y1))?;
    Some(y2)
}

/// Adaptive SDIRK2 with step-doubling error control from `t0` to `t1`.
pub fn sdirk2(a: f64, b: f64, lambda: f64, y0: f64, t0: f64, t1: f64, rtol: f64) -> Result<OdeSolution> {
    let fail = |reason: String| Error::Integrator { params: format!("a={a} b={b} lambda={lambda} y0={y0}"), reason };
    let mut t = t0;
    let mut y = y0;
    let mut h = (t1 - t0) * 1e-6;
    let mut sol = OdeSolution { t: vec![t], y: vec![y], rejected: 0 };
    let mut steps = 0usize;
    while t < t1 {
        steps += 1;
        if steps > 10_000_000 {
            return Err(fail("step budget exhausted".into()));
        }
        let last = t + h >= t1;
        let hh = if last { t1 - t } else { h };
        let full = sdirk_step(a, b, lambda, y, hh).ok_or_else(|| fail(format!("Newton failed at t = {t}")))?;
        let half = sdirk_step(a, b, lambda, y, 0.5 * hh).ok_or_else(|| fail(format!("Newton failed at t = {t}")))?;
        let two = sdirk_step(a, b, lambda, half, 0.5 * hh).ok_or_else(|| fail(format!("Newton failed at t = {t}")))?;
        let err = (two - full).abs() / 3.0;
        let tol = rtol * two.abs().max(y.abs()) + 1e-300;
        if err <= tol {
            t = if last { t1 } else { t + hh };
            y = two;
            sol.t.push(t);
            sol.y.push(y);
        } else {
            sol.rejected += 1;
        }
        let factor = if err == 0.0 { 4.0 } else { (0.9 * (tol / err).powf(1.0 / 3.0)).clamp(0.2, 4.0) };
        h = hh * factor;
        if !(h > 1e-14 * (t1 - t0)) {
            return Err(fail(format!("step size underflow at t = {t}")));
        }
    }
    Ok(sol)
}

const RTOL: f64 = 1e-9;

/// `max y` over `(tau, 4 tau]` for the extremal equation, starting at `y0`.
fn sup_after_tau(a: f64, b: f64, tau: f64, lambda: f64, y0: f64) -> Result<f64> {
    let first = sdirk2(a, b, lambda, y0, 0.0, tau, RTOL)?;
    let y_tau = *first.y.last().unwrap();
    let second = sdirk2(a, b, lambda, y_tau, tau, 4.0 * tau, RTOL)?;
    Ok(second.y.iter().cloned().fold(f64::MIN, f64::max))
}

/// One report per initial value: `lhs = max y on (tau, 4 tau]`, `rhs = C`.
pub fn ode_comparison(params: &OdeParams) -> Result<Vec<InequalityReport>> {
    params.validate()?;
    let c = params.bound();
    params
        .y0
        .iter()
        .enumerate()
        .map(|(i, &y0)| {
            let sup = sup_after_tau(params.a, params.b, params.tau, params.lambda, y0)?;
            Ok(InequalityReport::new(
                InequalityId::OdeCmp,
                i as u64,
                sup,
                c,
                c,
                ODE_SLACK,
                format!("{};y0={y0}", params.label()),
            ))
        })
        .collect()
}

/// Largest `max y` on `(tau, 4 tau]` over a dense log-spaced sweep of
/// initial values from `1e-6 C` to `1e12 C`.
pub fn ode_brute_force_sup(a: f64, b: f64, tau: f64, lambda: f64, samples: usize) -> Result<f64> {
    let c = ode_bound(a, b, tau, lambda);
    let mut best: f64 = 0.0;
    for k in 0..samples {
        let e = -6.0 + 18.0 * k as f64 / (samples - 1) as f64;
        best = best.max(sup_after_tau(a, b, tau, lambda, c * 10f64.powf(e))?);
    }
    Ok(best)
}

/// The full parameter sweep. Each point's bound is first validated against
/// [`ode_brute_force_sup`]; a violation there is an error, not a report row.
pub fn ode_sweep(brute_samples: usize, exec: Execution) -> Result<Vec<InequalityReport>> {
    let mut points = Vec::new();
    for &a in &ODE_SWEEP_VALUES {
        for &b in &ODE_SWEEP_VALUES {
            for &tau in &ODE_SWEEP_VALUES {
                for &lambda in &ODE_SWEEP_LAMBDAS {
                    let c = ode_bound(a, b, tau, lambda);
                    points.push(OdeParams { a, b, tau, lambda, y0: ODE_SWEEP_Y0_FACTORS.iter().map(|f| f * c).collect() });
                }
            }
        }
    }
    let results = par::map(&points, exec, |p| -> Result<Vec<InequalityReport>> {
        let c = p.bound();
        let brute = ode_brute_force_sup(p.a, p.b, p.tau, p.lambda, brute_samples)?;
        if brute > c * (1.0 + ODE_SLACK) {
            return Err(Error::Integrator {
                params: p.label(),
                reason: format!("brute-force supremum {brute} exceeds the bound {c}"),
            });
        }
        ode_comparison(p)
    });
    let mut out = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        for mut row in r? {
            row.seed += 3 * i as u64;
            out.push(row);
        }
    }
    Ok(out)
}
