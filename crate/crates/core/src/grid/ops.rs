//! Discrete differential and integral operators with homogeneous Neumann closure.

use super::{BoundaryData, FaceField, Geometry, Grid, ScalarField};
use crate::par;

/// Cell-centred vector in the grid's native orthonormal frame
/// (`x, y` or `r, theta`).
pub type Vec2 = [f64; 2];

/// Symmetric 2x2 tensor; on the interval only `xx` is populated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.xx * self.xx + 2.0 * self.xy * self.xy + self.yy * self.yy
    }
}

impl Grid {
    #[inline]
    fn left1(&self, b: usize) -> usize {
        if self.periodic1 {
            (b + self.n1 - 1) % self.n1
        } else {
            b - 1
        }
    }

    /// Visit every interior face as `(left, right, area, dist)`.
    pub(crate) fn for_each_interior_face(&self, mut f: impl FnMut(usize, usize, f64, f64)) {
        let (n0, n1) = (self.n0, self.n1);
        for a in 1..n0 {
            for j in 0..n1 {
                f(self.idx(a - 1, j), self.idx(a, j), self.area0[a], self.h0);
            }
        }
        let m = self.faces1_per_row();
        if m == 0 {
            return;
        }
        let first = if self.periodic1 { 0 } else { 1 };
        for i in 0..n0 {
            for b in first..n1 {
                f(self.idx(i, self.left1(b)), self.idx(i, b), self.area1[i], self.dist1[i]);
            }
        }
    }

    /// Evaluate `f(left, right, dist)` on every interior face; boundary faces get 0.
    pub fn map_interior_faces(&self, f: impl Fn(usize, usize, f64) -> f64 + Sync) -> FaceField {
        let (n0, n1) = (self.n0, self.n1);
        let axis0 = par::cells((n0 + 1) * n1, |k| {
            let (a, j) = (k / n1, k % n1);
            if a == 0 || a == n0 {
                0.0
            } else {
                f(self.idx(a - 1, j), self.idx(a, j), self.h0)
            }
        });
        let m = self.faces1_per_row();
        let axis1 = par::cells(n0 * m, |k| {
            let (i, b) = (k / m, k % m);
            if !self.periodic1 && (b == 0 || b == n1) {
                0.0
            } else {
                f(self.idx(i, self.left1(b)), self.idx(i, b), self.dist1[i])
            }
        });
        FaceField { axis0, axis1 }
    }

    /// Two-point normal derivative on interior faces; zero on boundary faces.
    pub fn gradient(&self, f: &ScalarField) -> FaceField {
        let v = f.values();
        self.map_interior_faces(|l, r, dist| (v[r] - v[l]) / dist)
    }

    /// Net outward flux per unit volume. Boundary face values are used as given.
    pub fn divergence(&self, flux: &FaceField) -> ScalarField {
        let (n1, m) = (self.n1, self.faces1_per_row());
        let vals = par::cells(self.n_cells(), |k| {
            let (i, j) = self.ij(k);
            let mut s = self.area0[i + 1] * flux.axis0[(i + 1) * n1 + j] - self.area0[i] * flux.axis0[i * n1 + j];
            if m > 0 {
                let right = if self.periodic1 { (j + 1) % n1 } else { j + 1 };
                s += self.area1[i] * (flux.axis1[i * m + right] - flux.axis1[i * m + j]);
            }
            s / self.row_volume[i]
        });
        ScalarField::new(vals)
    }

    pub fn laplacian(&self, f: &ScalarField) -> ScalarField {
        self.divergence(&self.gradient(f))
    }

    /// `sum_i f_i * vol_i`
    pub fn integrate(&self, f: &ScalarField) -> f64 {
        self.integrate_with(|k| f[k])
    }

    /// Volume-weighted sum of an arbitrary per-cell integrand.
    pub fn integrate_with(&self, f: impl Fn(usize) -> f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n0 {
            let mut row = 0.0;
            for j in 0..self.n1 {
                row += f(self.idx(i, j));
            }
            total += row * self.row_volume[i];
        }
        total
    }

    /// Volume-weighted inner product.
    pub fn inner(&self, f: &ScalarField, g: &ScalarField) -> f64 {
        self.integrate_with(|k| f[k] * g[k])
    }

    /// `sum_b g_b * |face_b|`
    pub fn boundary_integrate(&self, g: &[f64]) -> f64 {
        assert_eq!(g.len(), self.boundary.len(), "boundary data length");
        self.boundary.iter().zip(g).map(|(b, x)| b.weight * x).sum()
    }

    /// Face-based discrete Dirichlet energy, `-<laplacian(f), f>`.
    pub fn dirichlet_energy(&self, f: &ScalarField) -> f64 {
        let v = f.values();
        let mut e = 0.0;
        self.for_each_interior_face(|l, r, area, dist| {
            let d = v[r] - v[l];
            e += area * d * d / dist;
        });
        e
    }

    /// Cell gradients obtained by averaging the two face gradients along each axis.
    pub fn cell_gradient(&self, f: &ScalarField) -> Vec<Vec2> {
        self.cell_gradient_from_faces(&self.gradient(f))
    }

    pub fn cell_gradient_from_faces(&self, g: &FaceField) -> Vec<Vec2> {
        let (n1, m) = (self.n1, self.faces1_per_row());
        par::cells(self.n_cells(), |k| {
            let (i, j) = self.ij(k);
            let g0 = 0.5 * (g.axis0[i * n1 + j] + g.axis0[(i + 1) * n1 + j]);
            let g1 = if m == 0 {
                0.0
            } else {
                let right = if self.periodic1 { (j + 1) % n1 } else { j + 1 };
                0.5 * (g.axis1[i * m + j] + g.axis1[i * m + right])
            };
            [g0, g1]
        })
    }

    /// `|grad f|^2` per cell from [`Grid::cell_gradient`].
    pub fn grad_sq(&self, f: &ScalarField) -> Vec<f64> {
        self.cell_gradient(f).iter().map(|g| g[0] * g[0] + g[1] * g[1]).collect()
    }

    /// Value at a possibly out-of-range index, using even reflection across
    /// Neumann boundaries and wrapping along a periodic axis.
    #[inline]
    fn ghost(&self, v: &[f64], i: isize, j: isize) -> f64 {
        let reflect = |x: isize, n: usize| -> usize {
            let n = n as isize;
            if x < 0 {
                (-x - 1) as usize
            } else if x >= n {
                (2 * n - 1 - x) as usize
            } else {
                x as usize
            }
        };
        let ii = reflect(i, self.n0);
        let jj = if self.n1 == 1 {
            0
        } else if self.periodic1 {
            j.rem_euclid(self.n1 as isize) as usize
        } else {
            reflect(j, self.n1)
        };
        v[self.idx(ii, jj)]
    }

    /// Cell-centred Hessian from central differences with one mirrored ghost
    /// layer. On the annulus the result is the Cartesian Hessian assembled
    /// from polar derivatives.
    pub fn hessian(&self, f: &ScalarField) -> Vec<Sym2> {
        let v = f.values();
        let (h0, h1) = (self.h0, self.h1);
        par::cells(self.n_cells(), |k| {
            let (i, j) = self.ij(k);
            let (i, j) = (i as isize, j as isize);
            let c = v[k];
            let f = |di: isize, dj: isize| self.ghost(v, i + di, j + dj);
            let d00 = (f(1, 0) - 2.0 * c + f(-1, 0)) / (h0 * h0);
            match self.geometry {
                Geometry::Interval { .. } => Sym2 { xx: d00, xy: 0.0, yy: 0.0 },
                Geometry::Rectangle { .. } => Sym2 {
                    xx: d00,
                    xy: (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4.0 * h0 * h1),
                    yy: (f(0, 1) - 2.0 * c + f(0, -1)) / (h1 * h1),
                },
                Geometry::Annulus { .. } => {
                    let r = self.c0[i as usize];
                    let th = self.c1[j as usize];
                    let fr = (f(1, 0) - f(-1, 0)) / (2.0 * h0);
                    let ft = (f(0, 1) - f(0, -1)) / (2.0 * h1);
                    let frr = d00;
                    let ftt = (f(0, 1) - 2.0 * c + f(0, -1)) / (h1 * h1);
                    let frt = (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4.0 * h0 * h1);
                    let prr = frr;
                    let prt = frt / r - ft / (r * r);
                    let ptt = fr / r + ftt / (r * r);
                    let (s, co) = th.sin_cos();
                    Sym2 {
                        xx: co * co * prr - 2.0 * co * s * prt + s * s * ptt,
                        xy: co * s * (prr - ptt) + (co * co - s * s) * prt,
                        yy: s * s * prr + 2.0 * co * s * prt + co * co * ptt,
                    }
                }
            }
        })
    }

    /// Second-order one-sided estimate of `d|grad f|^2 / d nu` on every
    /// boundary face from the three cell layers next to it. Identically zero on the interval and
    /// the rectangle: on a flat wall with `f_nu = 0` both terms of
    /// `2 f_nu f_nunu + 2 f_tau f_taunu` vanish.
    pub fn boundary_normal_derivative_of_gradsq(&self, f: &ScalarField) -> BoundaryData {
        if !matches!(self.geometry, Geometry::Annulus { .. }) {
            return vec![0.0; self.boundary.len()];
        }
        let gsq = self.grad_sq(f);
        self.boundary
            .iter()
            .map(|b| {
                // centres at h/2, 3h/2, 5h/2 from the wall
                let inner2 = 2 * b.inner - b.cell;
                (2.0 * gsq[b.cell] - 3.0 * gsq[b.inner] + gsq[inner2]) / b.spacing
            })
            .collect()
    }

    /// Boundary values approximated by the adjacent cell value.
    pub fn boundary_trace(&self, f: &ScalarField) -> BoundaryData {
        self.boundary.iter().map(|b| f[b.cell]).collect()
    }

    /// Apply the symmetric stiffness form `K f = -V * laplacian(f)`.
    pub(crate) fn apply_stiffness(&self, f: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        self.for_each_interior_face(|l, r, area, dist| {
            let flux = area * (f[r] - f[l]) / dist;
            out[l] -= flux;
            out[r] += flux;
        });
    }

    /// Diagonal of the stiffness form.
    pub(crate) fn stiffness_diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_cells()];
        self.for_each_interior_face(|l, r, area, dist| {
            d[l] += area / dist;
            d[r] += area / dist;
        });
        d
    }
}

#[cfg(test)]
mod tests {
    use super::super::{make_grid, Resolution};
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn interval(n: usize) -> Grid {
        make_grid(Geometry::Interval { length: 1.0 }, Resolution::line(n)).unwrap()
    }

    fn annulus(n0: usize, n1: usize) -> Grid {
        make_grid(Geometry::Annulus { r0: 1.0, r1: 2.0 }, Resolution::plane(n0, n1)).unwrap()
    }

    fn rect(n0: usize, n1: usize) -> Grid {
        make_grid(Geometry::Rectangle { lx: 2.0, ly: 3.0 }, Resolution::plane(n0, n1)).unwrap()
    }

    fn order(e_coarse: f64, e_fine: f64) -> f64 {
        (e_coarse / e_fine).log2()
    }

    #[test]
    fn constant_has_zero_gradient() {
        for g in [interval(10), annulus(8, 16), rect(6, 9)] {
            let grad = g.gradient(&g.constant(3.5));
            assert_eq!(grad.max_abs(), 0.0);
            assert_eq!(g.laplacian(&g.constant(3.5)).max_abs(), 0.0);
        }
    }

    #[test]
    fn linear_gradient_exact_on_interior_faces() {
        let g = interval(50);
        let grad = g.gradient(&g.field_from_fn(|p| p.x));
        assert_eq!(grad.axis0[0], 0.0);
        assert_eq!(grad.axis0[50], 0.0);
        for a in 1..50 {
            assert!((grad.axis0[a] - 1.0).abs() < 1e-12);
        }
    }

    fn cos_gradient_error(n: usize) -> f64 {
        let g = interval(n);
        let (h, _) = g.spacing();
        let grad = g.gradient(&g.field_from_fn(|p| (PI * p.x).cos()));
        (1..n)
            .map(|a| {
                let x = a as f64 * h;
                (grad.axis0[a] + PI * (PI * x).sin()).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_second_order() {
        let e1 = cos_gradient_error(40);
        let e2 = cos_gradient_error(80);
        let e3 = cos_gradient_error(160);
        assert!(order(e1, e2) >= 1.9 && order(e2, e3) >= 1.9, "{e1} {e2} {e3}");
    }

    fn cos_laplacian_error(n: usize) -> f64 {
        let g = interval(n);
        let lap = g.laplacian(&g.field_from_fn(|p| (PI * p.x).cos()));
        (0..n)
            .map(|k| (lap[k] + PI * PI * (PI * g.coords(k).x).cos()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn laplacian_second_order() {
        let e1 = cos_laplacian_error(40);
        let e2 = cos_laplacian_error(80);
        let e3 = cos_laplacian_error(160);
        assert!(order(e1, e2) >= 1.9 && order(e2, e3) >= 1.9, "{e1} {e2} {e3}");
    }

    fn annulus_laplacian_error(n: usize) -> f64 {
        // Neumann in r; Laplacian from the polar formula f_rr + f_r/r + f_tt/r^2.
        let g = annulus(n, 2 * n);
        let k = PI;
        let f = g.field_from_fn(|p| (k * (p.a - 1.0)).cos() * (2.0 * p.b).cos());
        let lap = g.laplacian(&f);
        (0..g.n_cells())
            .map(|c| {
                let p = g.coords(c);
                let (r, t) = (p.a, p.b);
                let ex = (-k * k * (k * (r - 1.0)).cos() - k * (k * (r - 1.0)).sin() / r
                    - 4.0 * (k * (r - 1.0)).cos() / (r * r))
                    * (2.0 * t).cos();
                (lap[c] - ex).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn annulus_laplacian_second_order() {
        let e1 = annulus_laplacian_error(16);
        let e2 = annulus_laplacian_error(32);
        let e3 = annulus_laplacian_error(64);
        assert!(order(e1, e2) >= 1.9 && order(e2, e3) >= 1.9, "{e1} {e2} {e3}");
    }

    #[test]
    fn divergence_of_zero_is_zero() {
        let g = rect(5, 7);
        assert_eq!(g.divergence(&g.zeros_faces()).max_abs(), 0.0);
    }

    #[test]
    fn quadratic_hessian_exact() {
        let g = rect(10, 12);
        let h = g.hessian(&g.field_from_fn(|p| p.x * p.x));
        for i in 1..9 {
            for j in 1..11 {
                let t = h[g.idx(i, j)];
                assert!((t.xx - 2.0).abs() < 1e-9 && t.xy.abs() < 1e-9 && t.yy.abs() < 1e-9);
            }
        }
        let lin = g.hessian(&g.field_from_fn(|p| 3.0 * p.x - 2.0 * p.y + 1.0));
        for i in 1..9 {
            for j in 1..11 {
                assert!(lin[g.idx(i, j)].norm_sq() < 1e-16);
            }
        }
    }

    #[test]
    fn annulus_hessian_of_r_squared() {
        // r^2 = x^2 + y^2 has Hessian 2I.
        let g = annulus(16, 32);
        let h = g.hessian(&g.field_from_fn(|p| p.a * p.a));
        for i in 1..15 {
            for j in 0..32 {
                let t = h[g.idx(i, j)];
                assert!((t.xx - 2.0).abs() < 1e-8 && t.xy.abs() < 1e-8 && (t.yy - 2.0).abs() < 1e-8, "{t:?}");
            }
        }
    }

    fn mixed_hessian_error(n: usize) -> f64 {
        let g = make_grid(Geometry::Rectangle { lx: 1.0, ly: 1.0 }, Resolution::plane(n, n)).unwrap();
        let f = g.field_from_fn(|p| 2.0 + (PI * p.x).sin() * (PI * p.y).sin());
        let h = g.hessian(&f);
        let mut e: f64 = 0.0;
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let p = g.coords(g.idx(i, j));
                let ex = PI * PI * (PI * p.x).cos() * (PI * p.y).cos();
                e = e.max((h[g.idx(i, j)].xy - ex).abs());
            }
        }
        e
    }

    #[test]
    fn mixed_hessian_second_order() {
        let e1 = mixed_hessian_error(20);
        let e2 = mixed_hessian_error(40);
        let e3 = mixed_hessian_error(80);
        assert!(order(e1, e2) >= 1.9 && order(e2, e3) >= 1.9, "{e1} {e2} {e3}");
    }

    fn annulus_hessian_error(n: usize) -> f64 {
        // f = x^2 y + cos(x): compare with analytic Cartesian Hessian away from the boundary rows.
        let g = annulus(n, 4 * n);
        let f = g.field_from_fn(|p| p.x * p.x * p.y + p.x.cos());
        let h = g.hessian(&f);
        let mut e: f64 = 0.0;
        for i in 1..n - 1 {
            for j in 0..4 * n {
                let p = g.coords(g.idx(i, j));
                let t = h[g.idx(i, j)];
                e = e
                    .max((t.xx - (2.0 * p.y - p.x.cos())).abs())
                    .max((t.xy - 2.0 * p.x).abs())
                    .max(t.yy.abs());
            }
        }
        e
    }

    #[test]
    fn annulus_hessian_second_order() {
        let e1 = annulus_hessian_error(16);
        let e2 = annulus_hessian_error(32);
        let e3 = annulus_hessian_error(64);
        assert!(order(e1, e2) >= 1.9 && order(e2, e3) >= 1.9, "{e1} {e2} {e3}");
    }

    #[test]
    fn integrate_examples() {
        let a = annulus(32, 64);
        assert!((a.integrate(&a.constant(1.0)) - 3.0 * PI).abs() < 1e-12);
        assert_eq!(a.integrate(&a.constant(0.0)), 0.0);
        let i = interval(64);
        // midpoint rule is exact for linear integrands
        assert!((i.integrate(&i.field_from_fn(|p| p.x)) - 0.5).abs() < 1e-14);
        let e1 = (interval(20).integrate(&interval(20).field_from_fn(|p| p.x * p.x)) - 1.0 / 3.0).abs();
        let e2 = (interval(40).integrate(&interval(40).field_from_fn(|p| p.x * p.x)) - 1.0 / 3.0).abs();
        assert!(order(e1, e2) > 1.99);
    }

    #[test]
    fn boundary_integrate_examples() {
        let a = annulus(16, 64);
        let ones = vec![1.0; a.boundary_faces().len()];
        assert!((a.boundary_integrate(&ones) - 6.0 * PI).abs() < 1e-10);
        let zeros = vec![0.0; a.boundary_faces().len()];
        assert_eq!(a.boundary_integrate(&zeros), 0.0);
        let outer_cos: Vec<f64> = a
            .boundary_faces()
            .iter()
            .map(|b| {
                let r = b.position[0].hypot(b.position[1]);
                if (r - 2.0).abs() < 1e-12 {
                    b.position[0] / r
                } else {
                    0.0
                }
            })
            .collect();
        assert!(a.boundary_integrate(&outer_cos).abs() < 1e-10);
    }

    #[test]
    fn interval_boundary_gradsq_derivative_vanishes() {
        let g = interval(32);
        let f = g.field_from_fn(|p| (3.0 * p.x).sin() + p.x * p.x);
        assert!(g.boundary_normal_derivative_of_gradsq(&f).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn radial_neumann_boundary_gradsq_second_order() {
        let err = |n: usize| {
            let g = annulus(n, 16);
            let f = g.field_from_fn(|p| (PI * (p.a - 1.0)).cos());
            g.boundary_normal_derivative_of_gradsq(&f).iter().fold(0.0f64, |m, x| m.max(x.abs()))
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        assert!(order(e1, e2) >= 1.8 && order(e2, e3) >= 1.8, "{e1} {e2} {e3}");
    }

    #[test]
    fn angular_mode_boundary_integral_converges() {
        // f = 2 + cos(theta): d_nu |grad f|^2 = 2 sin^2 / r^3 inward-pointing on r = 1, outward on r = 2,
        // so int_bdry f^-1 d_nu|grad f|^2 = 2 (1 - 1/4) int_0^{2 pi} sin^2/(2 + cos) = 3 pi (2 - sqrt 3).
        let exact = 3.0 * PI * (2.0 - 3f64.sqrt());
        let err = |n: usize| {
            let g = annulus(n, 3 * n);
            let f = g.field_from_fn(|p| 2.0 + p.b.cos());
            let d = g.boundary_normal_derivative_of_gradsq(&f);
            let data: Vec<f64> = g.boundary_faces().iter().zip(&d).map(|(b, x)| x / f[b.cell]).collect();
            (g.boundary_integrate(&data) - exact).abs()
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e2 <= 0.01 * exact && order(e1, e2) >= 1.5, "{e1} {e2}");
    }

    fn nonradial_boundary_error(n: usize) -> f64 {
        // f = 2 + cos(pi (r - 1)) cos(2 theta) on Annulus(1, 2). With f_r = f_{r theta} = 0 on both
        // circles, d_r(f_r^2 + f_t^2 / r^2) = -2 f_t^2 / r^3, f_t = -2 cos(pi(r-1)) sin(2 theta).
        let g = annulus(n, 4 * n);
        let f = g.field_from_fn(|p| 2.0 + (PI * (p.a - 1.0)).cos() * (2.0 * p.b).cos());
        let data = g.boundary_normal_derivative_of_gradsq(&f);
        g.boundary_faces()
            .iter()
            .zip(&data)
            .map(|(b, d)| {
                let r = b.position[0].hypot(b.position[1]);
                let th = b.position[1].atan2(b.position[0]);
                let ft = 2.0 * (2.0 * th).sin();
                let dr = -2.0 * ft * ft / (r * r * r);
                let outward = if r < 1.5 { -1.0 } else { 1.0 };
                (d - outward * dr).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn nonradial_boundary_gradsq_second_order() {
        let e1 = nonradial_boundary_error(16);
        let e2 = nonradial_boundary_error(32);
        let e3 = nonradial_boundary_error(64);
        assert!(order(e1, e2) >= 1.8 && order(e2, e3) >= 1.8, "{e1} {e2} {e3}");
    }

    fn random_field(g: &Grid, seed: &[f64]) -> ScalarField {
        ScalarField::new((0..g.n_cells()).map(|k| seed[k % seed.len()] + (k as f64 * 0.37).sin()).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn laplacian_conservative_symmetric_nsd(
            a in prop::collection::vec(-5.0f64..5.0, 7..23),
            b in prop::collection::vec(-5.0f64..5.0, 5..19),
            which in 0usize..3,
        ) {
            let g = match which { 0 => interval(37), 1 => rect(9, 11), _ => annulus(8, 24) };
            let f = random_field(&g, &a);
            let h = random_field(&g, &b);
            let lf = g.laplacian(&f);
            let lh = g.laplacian(&h);
            let grad_l1: f64 = g.cell_gradient(&f).iter().map(|v| v[0].abs() + v[1].abs()).sum();
            prop_assert!(g.integrate(&lf).abs() <= 1e-12 * grad_l1.max(1.0));
            let s1 = g.inner(&lf, &h);
            let s2 = g.inner(&f, &lh);
            prop_assert!((s1 - s2).abs() <= 1e-11 * s1.abs().max(s2.abs()).max(1.0));
            prop_assert!(g.inner(&lf, &f) <= 1e-12);
            let e = g.dirichlet_energy(&f);
            prop_assert!((e + g.inner(&lf, &f)).abs() <= 1e-10 * e.max(1.0));
        }
    }
}
