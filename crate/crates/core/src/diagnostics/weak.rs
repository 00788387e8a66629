use crate::error::{Error, Result};
use crate::grid::{CellCoords, Grid, Vec2};
use crate::solver::SimState;

type SpaceFn = Box<dyn Fn(&CellCoords) -> f64 + Sync>;
type SpaceGradFn = Box<dyn Fn(&CellCoords) -> Vec2 + Sync>;
type TimeFn = Box<dyn Fn(f64) -> f64 + Sync>;

/// Separable test function `phi(x, t) = psi(x) chi(t)`. The spatial gradient
/// is given in the grid's native orthonormal frame.
pub struct SpaceTimeTest {
    pub psi: SpaceFn,
    pub grad_psi: SpaceGradFn,
    pub chi: TimeFn,
    pub dchi: TimeFn,
}

impl SpaceTimeTest {
    pub fn zero() -> Self {
        SpaceTimeTest { psi: Box::new(|_| 0.0), grad_psi: Box::new(|_| [0.0, 0.0]), chi: Box::new(|_| 0.0), dchi: Box::new(|_| 0.0) }
    }

    /// `psi(x) cos^2(pi t / (2 T))`, which vanishes with its derivative at `T`.
    pub fn with_cutoff(
        psi: impl Fn(&CellCoords) -> f64 + Sync + 'static,
        grad_psi: impl Fn(&CellCoords) -> Vec2 + Sync + 'static,
        t_final: f64,
    ) -> Self {
        let w = std::f64::consts::PI / (2.0 * t_final);
        SpaceTimeTest {
            psi: Box::new(psi),
            grad_psi: Box::new(grad_psi),
            chi: Box::new(move |t| (w * t).cos().powi(2)),
            dchi: Box::new(move |t| -w * (2.0 * w * t).sin()),
        }
    }
}

/// `int g dt` over sample times: composite Simpson on uniform samples with
/// an even number of intervals, trapezoid otherwise.
pub fn time_integral(t: &[f64], g: &[f64]) -> f64 {
    let m = t.len() - 1;
    if m == 0 {
        return 0.0;
    }
    let h = t[1] - t[0];
    let uniform = t.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
    if uniform && m % 2 == 0 {
        let s: f64 = g
            .iter()
            .enumerate()
            .map(|(k, x)| x * if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 })
            .sum();
        s * h / 3.0
    } else {
        t.windows(2).zip(g.windows(2)).map(|(tw, gw)| 0.5 * (tw[1] - tw[0]) * (gw[0] + gw[1])).sum()
    }
}

/// Signed defects of the two weak identities of the regularized system on a
/// sampled trajectory (first sample = initial data):
///
/// `res_u = -intint u phi_t - int u0 phi(0) + intint grad u . grad phi - intint u/(1+eps u)^2 grad v . grad phi`
///
/// `res_v = intint v phi_t + int v0 phi(0) - intint grad v . grad phi - intint u v/(1+eps u) phi`
pub fn weak_residual(grid: &Grid, trajectory: &[SimState], eps: f64, phi: &SpaceTimeTest) -> Result<(f64, f64)> {
    if trajectory.len() < 2 {
        return Err(Error::Precondition("weak residual needs at least two samples".into()));
    }
    let t: Vec<f64> = trajectory.iter().map(|s| s.t).collect();
    let t_last = *t.last().unwrap();
    if (phi.chi)(t_last).abs() > 1e-12 {
        return Err(Error::Precondition(format!("test function does not vanish at the final sample t = {t_last}")));
    }
    let coords = grid.cell_centers();
    let psi: Vec<f64> = coords.iter().map(|c| (phi.psi)(c)).collect();
    let gpsi: Vec<Vec2> = coords.iter().map(|c| (phi.grad_psi)(c)).collect();
    let dot = |a: Vec2, b: Vec2| a[0] * b[0] + a[1] * b[1];

    let mut gu_series = Vec::with_capacity(t.len());
    let mut gv_series = Vec::with_capacity(t.len());
    for (s, &tk) in trajectory.iter().zip(&t) {
        let (u, v) = (&s.u, &s.v);
        let (chi, dchi) = ((phi.chi)(tk), (phi.dchi)(tk));
        let gu = grid.cell_gradient(u);
        let gv = grid.cell_gradient(v);
        let fu = grid.integrate_with(|k| {
            let a = u[k] / (1.0 + eps * u[k]).powi(2);
            -u[k] * psi[k] * dchi + chi * dot(gu[k], gpsi[k]) - chi * a * dot(gv[k], gpsi[k])
        });
        let fv = grid.integrate_with(|k| {
            v[k] * psi[k] * dchi - chi * dot(gv[k], gpsi[k]) - chi * u[k] * v[k] / (1.0 + eps * u[k]) * psi[k]
        });
        gu_series.push(fu);
        gv_series.push(fv);
    }
    let s0 = &trajectory[0];
    let chi0 = (phi.chi)(t[0]);
    let init_u = chi0 * grid.integrate_with(|k| s0.u[k] * psi[k]);
    let init_v = chi0 * grid.integrate_with(|k| s0.v[k] * psi[k]);
    let res_u = time_integral(&t, &gu_series) - init_u;
    let res_v = time_integral(&t, &gv_series) + init_v;
    Ok((res_u, res_v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Geometry, Resolution};
    use crate::initial::InitialPair;
    use crate::solver::{run, SimParams, StateRecorder};

    #[test]
    fn zero_test_function_gives_zero() {
        let g = make_grid(Geometry::Interval { length: 1.0 }, Resolution::line(16)).unwrap();
        let init = InitialPair::new(&g, g.field_from_fn(|p| 1.0 + p.x), g.constant(1.0)).unwrap();
        let mut rec = StateRecorder::new(1);
        run(&g, &init, &SimParams::fixed(0.1, 1e-3, 0.02, 100), &mut rec).unwrap();
        assert_eq!(weak_residual(&g, &rec.states, 0.1, &SpaceTimeTest::zero()).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn homogeneous_ode_identity() {
        let g = make_grid(Geometry::Annulus { r0: 1.0, r1: 2.0 }, Resolution::plane(6, 18)).unwrap();
        let init = InitialPair::new(&g, g.constant(1.0), g.constant(2.0)).unwrap();
        let mut rec = StateRecorder::new(1);
        run(&g, &init, &SimParams::fixed(0.1, 1e-3, 1.0, 1000), &mut rec).unwrap();
        let phi = SpaceTimeTest::with_cutoff(|_| 1.0, |_| [0.0, 0.0], 1.0);
        let (ru, rv) = weak_residual(&g, &rec.states, 0.1, &phi).unwrap();
        assert!(ru.abs() < 1e-8 && rv.abs() < 1e-8, "{ru} {rv}");
    }

    #[test]
    fn rejects_test_function_alive_at_end() {
        let g = make_grid(Geometry::Interval { length: 1.0 }, Resolution::line(8)).unwrap();
        let init = InitialPair::new(&g, g.constant(1.0), g.constant(1.0)).unwrap();
        let mut rec = StateRecorder::new(1);
        run(&g, &init, &SimParams::fixed(0.1, 1e-2, 0.1, 10), &mut rec).unwrap();
        let phi = SpaceTimeTest::with_cutoff(|_| 1.0, |_| [0.0, 0.0], 0.2);
        assert!(weak_residual(&g, &rec.states, 0.1, &phi).is_err());
    }
}
