//! Jacobi-preconditioned conjugate gradients for `(V + dt K) x = b`, where `V`
//! is the diagonal of cell volumes and `K` the Neumann stiffness form.

use crate::error::{Error, Result};
use crate::grid::Grid;

pub(crate) struct ImplicitDiffusion {
    volumes: Vec<f64>,
    stiff_diag: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ImplicitDiffusion {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.n_cells();
        ImplicitDiffusion {
            volumes: grid.cell_volumes(),
            stiff_diag: grid.stiffness_diagonal(),
            r: vec![0.0; n],
            z: vec![0.0; n],
            p: vec![0.0; n],
            ap: vec![0.0; n],
        }
    }

    fn apply(&mut self, grid: &Grid, dt: f64, x: &[f64]) {
        let Self { volumes, ap, .. } = self;
        grid.apply_stiffness(x, ap);
        for ((y, v), xi) in ap.iter_mut().zip(volumes.iter()).zip(x) {
            *y = v * xi + dt * *y;
        }
    }

    /// Solve `(V + dt K) x = V b`, starting from `x = b`. Returns the iteration count.
    pub fn solve(&mut self, grid: &Grid, dt: f64, b: &[f64], x: &mut [f64], rel_tol: f64) -> Result<usize> {
        x.copy_from_slice(b);
        let rhs_norm = b.iter().zip(&self.volumes).map(|(bi, v)| (bi * v) * (bi * v)).sum::<f64>().sqrt();
        if rhs_norm == 0.0 {
            x.iter_mut().for_each(|xi| *xi = 0.0);
            return Ok(0);
        }
        self.apply(grid, dt, x);
        for k in 0..x.len() {
            self.r[k] = self.volumes[k] * b[k] - self.ap[k];
        }
        let target = rel_tol * rhs_norm;
        let max_iter = 10 * x.len() + 100;
        let mut res = dot(&self.r, &self.r).sqrt();
        if res <= target {
            return Ok(0);
        }
        for k in 0..x.len() {
            self.z[k] = self.r[k] / (self.volumes[k] + dt * self.stiff_diag[k]);
        }
        self.p.copy_from_slice(&self.z);
        let mut rz = dot(&self.r, &self.z);
        for it in 1..=max_iter {
            let p = std::mem::take(&mut self.p);
            self.apply(grid, dt, &p);
            self.p = p;
            let alpha = rz / dot(&self.p, &self.ap);
            for k in 0..x.len() {
                x[k] += alpha * self.p[k];
                self.r[k] -= alpha * self.ap[k];
            }
            res = dot(&self.r, &self.r).sqrt();
            if res <= target {
                return Ok(it);
            }
            for k in 0..x.len() {
                self.z[k] = self.r[k] / (self.volumes[k] + dt * self.stiff_diag[k]);
            }
            let rz_new = dot(&self.r, &self.z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..x.len() {
                self.p[k] = self.z[k] + beta * self.p[k];
            }
        }
        Err(Error::LinearSolve { iterations: max_iter, residual: res / rhs_norm })
    }
}
