//! Cell-centred finite-volume grids on an interval, a rectangle or an annulus.
//!
//! Cells are stored row-major over `(axis0, axis1)`: cell `(i, j)` lives at
//! `i * n1 + j`. Axis 0 is `x` (interval, rectangle) or `r` (annulus); axis 1
//! is `y` or `theta`. The interval uses `n1 = 1`.
//!
//! Face-valued data carries the derivative along the face normal in physical
//! units, so on the annulus the theta component already includes the `1/r`
//! metric factor.

mod io;
mod ops;

pub use io::{read_snapshot_binary, read_snapshot_csv, write_snapshot_binary, write_snapshot_csv, Snapshot};
pub use ops::{Sym2, Vec2};

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    Interval { length: f64 },
    Rectangle { lx: f64, ly: f64 },
    Annulus { r0: f64, r1: f64 },
}

impl Geometry {
    pub fn dimension(&self) -> usize {
        match self {
            Geometry::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Exact measure of the domain.
    pub fn measure(&self) -> f64 {
        match *self {
            Geometry::Interval { length } => length,
            Geometry::Rectangle { lx, ly } => lx * ly,
            Geometry::Annulus { r0, r1 } => PI * (r1 * r1 - r0 * r0),
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Geometry::Interval { length } => length,
            Geometry::Rectangle { lx, ly } => lx.hypot(ly),
            Geometry::Annulus { r1, .. } => 2.0 * r1,
        }
    }

    /// Largest boundary curvature; zero for flat boundaries.
    pub fn curvature_bound(&self) -> f64 {
        match *self {
            Geometry::Annulus { r0, .. } => 1.0 / r0,
            _ => 0.0,
        }
    }

    /// True when the boundary is smooth (no corners).
    pub fn smooth_boundary(&self) -> bool {
        !matches!(self, Geometry::Rectangle { .. })
    }

    fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        match *self {
            Geometry::Interval { length } if !pos(length) => {
                Err(Error::InvalidGeometry(format!("interval length {length} must be positive")))
            }
            Geometry::Rectangle { lx, ly } if !pos(lx) || !pos(ly) => Err(Error::InvalidGeometry(
                format!("rectangle sides {lx} x {ly} must be positive"),
            )),
            Geometry::Annulus { r0, r1 } if !pos(r0) || !pos(r1) || r0 >= r1 => Err(
                Error::InvalidGeometry(format!("annulus needs 0 < r0 < r1, got r0 = {r0}, r1 = {r1}")),
            ),
            _ => Ok(()),
        }
    }

    pub(crate) fn code(&self) -> u8 {
        match self {
            Geometry::Interval { .. } => 0,
            Geometry::Rectangle { .. } => 1,
            Geometry::Annulus { .. } => 2,
        }
    }

    pub(crate) fn dims(&self) -> (f64, f64) {
        match *self {
            Geometry::Interval { length } => (length, 0.0),
            Geometry::Rectangle { lx, ly } => (lx, ly),
            Geometry::Annulus { r0, r1 } => (r0, r1),
        }
    }
}

impl fmt::Display for Geometry {
    /// Comma-free label used in snapshot headers.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Geometry::Interval { length } => write!(f, "interval:{length}"),
            Geometry::Rectangle { lx, ly } => write!(f, "rectangle:{lx}:{ly}"),
            Geometry::Annulus { r0, r1 } => write!(f, "annulus:{r0}:{r1}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolution {
    pub n0: usize,
    /// Omitted for the interval.
    #[serde(default = "one")]
    pub n1: usize,
}

impl Resolution {
    pub fn line(n: usize) -> Self {
        Resolution { n0: n, n1: 1 }
    }

    pub fn plane(n0: usize, n1: usize) -> Self {
        Resolution { n0, n1 }
    }

    /// Same shape with every axis multiplied by `factor` (the interval keeps `n1 = 1`).
    pub fn refined(self, factor: usize) -> Self {
        Resolution {
            n0: self.n0 * factor,
            n1: if self.n1 == 1 { 1 } else { self.n1 * factor },
        }
    }
}

fn one() -> usize {
    1
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.n1 == 1 {
            write!(f, "{}", self.n0)
        } else {
            write!(f, "{}x{}", self.n0, self.n1)
        }
    }
}

/// Coordinates of a cell centre. `a`, `b` are the native coordinates
/// (`x`, `y` or `r`, `theta`); `x`, `y` are Cartesian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellCoords {
    pub a: f64,
    pub b: f64,
    pub x: f64,
    pub y: f64,
}

/// One boundary face with its outward unit normal (Cartesian) and measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    /// Adjacent cell.
    pub cell: usize,
    /// Next cell inward along the normal.
    pub inner: usize,
    /// Axis the face is normal to.
    pub axis: usize,
    /// Distance between `cell` and `inner` centres.
    pub spacing: f64,
    /// Arc-length (2D) or counting (1D) weight.
    pub weight: f64,
    pub normal: [f64; 2],
    /// Face midpoint, Cartesian.
    pub position: [f64; 2],
}

/// Values on boundary faces, aligned with [`Grid::boundary_faces`].
pub type BoundaryData = Vec<f64>;

#[derive(Debug, Clone)]
pub struct Grid {
    geometry: Geometry,
    n0: usize,
    n1: usize,
    h0: f64,
    h1: f64,
    /// Native coordinate of cell centres along axis 0 / axis 1.
    c0: Vec<f64>,
    c1: Vec<f64>,
    /// Cell volume per axis-0 row (constant along axis 1).
    row_volume: Vec<f64>,
    /// Axis-0 face area per face row `0..=n0`.
    area0: Vec<f64>,
    /// Axis-1 face area and centre distance per cell row.
    area1: Vec<f64>,
    dist1: Vec<f64>,
    periodic1: bool,
    boundary: Vec<BoundaryFace>,
}

/// Validate and build a grid.
pub fn make_grid(geometry: Geometry, resolution: Resolution) -> Result<Grid> {
    Grid::new(geometry, resolution)
}

impl Grid {
    pub fn new(geometry: Geometry, resolution: Resolution) -> Result<Self> {
        geometry.validate()?;
        let Resolution { n0, n1 } = resolution;
        if n0 < 4 {
            return Err(Error::InvalidResolution(format!("need at least 4 cells along axis 0, got {n0}")));
        }
        match geometry {
            Geometry::Interval { .. } if n1 != 1 => {
                return Err(Error::InvalidResolution(format!("interval grids have n1 = 1, got {n1}")))
            }
            Geometry::Rectangle { .. } | Geometry::Annulus { .. } if n1 < 4 => {
                return Err(Error::InvalidResolution(format!("need at least 4 cells along axis 1, got {n1}")))
            }
            _ => {}
        }

        let (h0, h1, start0, start1) = match geometry {
            Geometry::Interval { length } => (length / n0 as f64, 1.0, 0.0, 0.0),
            Geometry::Rectangle { lx, ly } => (lx / n0 as f64, ly / n1 as f64, 0.0, 0.0),
            Geometry::Annulus { r0, r1 } => ((r1 - r0) / n0 as f64, 2.0 * PI / n1 as f64, r0, 0.0),
        };
        let c0: Vec<f64> = (0..n0).map(|i| start0 + (i as f64 + 0.5) * h0).collect();
        let c1: Vec<f64> = (0..n1).map(|j| start1 + (j as f64 + 0.5) * h1).collect();
        let face0: Vec<f64> = (0..=n0).map(|a| start0 + a as f64 * h0).collect();

        let (row_volume, area0, area1, dist1, periodic1) = match geometry {
            Geometry::Interval { .. } => (vec![h0; n0], vec![1.0; n0 + 1], vec![0.0; n0], vec![1.0; n0], false),
            Geometry::Rectangle { .. } => (vec![h0 * h1; n0], vec![h1; n0 + 1], vec![h0; n0], vec![h1; n0], false),
            Geometry::Annulus { .. } => (
                c0.iter().map(|r| r * h0 * h1).collect(),
                face0.iter().map(|r| r * h1).collect(),
                vec![h0; n0],
                c0.iter().map(|r| r * h1).collect(),
                true,
            ),
        };

        let mut grid = Grid {
            geometry,
            n0,
            n1,
            h0,
            h1,
            c0,
            c1,
            row_volume,
            area0,
            area1,
            dist1,
            periodic1,
            boundary: Vec::new(),
        };
        grid.boundary = grid.build_boundary(&face0);
        Ok(grid)
    }

    fn build_boundary(&self, face0: &[f64]) -> Vec<BoundaryFace> {
        let (n0, n1) = (self.n0, self.n1);
        let mut out = Vec::new();
        match self.geometry {
            Geometry::Interval { length } => {
                out.push(BoundaryFace {
                    cell: 0,
                    inner: 1,
                    axis: 0,
                    spacing: self.h0,
                    weight: 1.0,
                    normal: [-1.0, 0.0],
                    position: [0.0, 0.0],
                });
                out.push(BoundaryFace {
                    cell: n0 - 1,
                    inner: n0 - 2,
                    axis: 0,
                    spacing: self.h0,
                    weight: 1.0,
                    normal: [1.0, 0.0],
                    position: [length, 0.0],
                });
            }
            Geometry::Rectangle { lx, ly } => {
                for j in 0..n1 {
                    let y = self.c1[j];
                    out.push(BoundaryFace {
                        cell: self.idx(0, j),
                        inner: self.idx(1, j),
                        axis: 0,
                        spacing: self.h0,
                        weight: self.h1,
                        normal: [-1.0, 0.0],
                        position: [0.0, y],
                    });
                    out.push(BoundaryFace {
                        cell: self.idx(n0 - 1, j),
                        inner: self.idx(n0 - 2, j),
                        axis: 0,
                        spacing: self.h0,
                        weight: self.h1,
                        normal: [1.0, 0.0],
                        position: [lx, y],
                    });
                }
                for i in 0..n0 {
                    let x = self.c0[i];
                    out.push(BoundaryFace {
                        cell: self.idx(i, 0),
                        inner: self.idx(i, 1),
                        axis: 1,
                        spacing: self.h1,
                        weight: self.h0,
                        normal: [0.0, -1.0],
                        position: [x, 0.0],
                    });
                    out.push(BoundaryFace {
                        cell: self.idx(i, n1 - 1),
                        inner: self.idx(i, n1 - 2),
                        axis: 1,
                        spacing: self.h1,
                        weight: self.h0,
                        normal: [0.0, 1.0],
                        position: [x, ly],
                    });
                }
            }
            Geometry::Annulus { r0, r1 } => {
                for (side, r, i, inner) in [(-1.0, r0, 0, 1), (1.0, r1, n0 - 1, n0 - 2)] {
                    debug_assert!((face0[if side < 0.0 { 0 } else { n0 }] - r).abs() < 1e-12 * r);
                    for j in 0..n1 {
                        let th = self.c1[j];
                        let (s, c) = th.sin_cos();
                        out.push(BoundaryFace {
                            cell: self.idx(i, j),
                            inner: self.idx(inner, j),
                            axis: 0,
                            spacing: self.h0,
                            weight: r * self.h1,
                            normal: [side * c, side * s],
                            position: [r * c, r * s],
                        });
                    }
                }
            }
        }
        out
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n1 + j
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k / self.n1, k % self.n1)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn resolution(&self) -> Resolution {
        Resolution { n0: self.n0, n1: self.n1 }
    }

    pub fn dimension(&self) -> usize {
        self.geometry.dimension()
    }

    pub fn n_cells(&self) -> usize {
        self.n0 * self.n1
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n0, self.n1)
    }

    /// Native spacings `(h0, h1)`; `h1` is `dtheta` on the annulus and 1 on the interval.
    pub fn spacing(&self) -> (f64, f64) {
        (self.h0, self.h1)
    }

    /// Smallest physical distance between neighbouring cell centres.
    pub fn min_spacing(&self) -> f64 {
        match self.geometry {
            Geometry::Interval { .. } => self.h0,
            Geometry::Rectangle { .. } => self.h0.min(self.h1),
            Geometry::Annulus { r0, .. } => self.h0.min(r0 * self.h1).min(self.dist1[0]),
        }
    }

    pub fn curvature_bound(&self) -> f64 {
        self.geometry.curvature_bound()
    }

    pub fn measure(&self) -> f64 {
        self.geometry.measure()
    }

    #[inline]
    pub fn volume(&self, k: usize) -> f64 {
        self.row_volume[k / self.n1]
    }

    pub fn cell_volumes(&self) -> Vec<f64> {
        (0..self.n_cells()).map(|k| self.volume(k)).collect()
    }

    pub fn coords(&self, k: usize) -> CellCoords {
        let (i, j) = self.ij(k);
        let (a, b) = (self.c0[i], if self.n1 == 1 { 0.0 } else { self.c1[j] });
        match self.geometry {
            Geometry::Interval { .. } => CellCoords { a, b: 0.0, x: a, y: 0.0 },
            Geometry::Rectangle { .. } => CellCoords { a, b, x: a, y: b },
            Geometry::Annulus { .. } => CellCoords { a, b, x: a * b.cos(), y: a * b.sin() },
        }
    }

    pub fn cell_centers(&self) -> Vec<CellCoords> {
        (0..self.n_cells()).map(|k| self.coords(k)).collect()
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary
    }

    pub fn is_periodic_axis1(&self) -> bool {
        self.periodic1
    }

    /// Number of axis-1 faces per axis-0 row.
    pub(crate) fn faces1_per_row(&self) -> usize {
        match self.geometry {
            Geometry::Interval { .. } => 0,
            Geometry::Rectangle { .. } => self.n1 + 1,
            Geometry::Annulus { .. } => self.n1,
        }
    }

    pub fn field_from_fn(&self, f: impl Fn(&CellCoords) -> f64) -> ScalarField {
        ScalarField::new((0..self.n_cells()).map(|k| f(&self.coords(k))).collect())
    }

    pub fn constant(&self, c: f64) -> ScalarField {
        ScalarField::new(vec![c; self.n_cells()])
    }

    pub fn zeros_faces(&self) -> FaceField {
        FaceField {
            axis0: vec![0.0; (self.n0 + 1) * self.n1],
            axis1: vec![0.0; self.n0 * self.faces1_per_row()],
        }
    }

    pub fn check_field(&self, f: &ScalarField) -> Result<()> {
        if f.len() != self.n_cells() {
            return Err(Error::ShapeMismatch { expected: self.n_cells(), got: f.len() });
        }
        Ok(())
    }
}

/// Cell-centred values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        ScalarField { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField::new(self.values.iter().map(|&x| f(x)).collect())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    pub fn check_positive(&self) -> Result<()> {
        match self.values.iter().position(|&x| !(x > 0.0)) {
            Some(cell) => Err(Error::NonPositive { cell, value: self.values[cell] }),
            None => Ok(()),
        }
    }

    pub fn check_nonnegative(&self) -> Result<()> {
        match self.values.iter().position(|&x| !(x >= 0.0)) {
            Some(cell) => Err(Error::Negative { cell, value: self.values[cell] }),
            None => Ok(()),
        }
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

/// Normal-derivative (or normal-flux) values on all faces.
///
/// `axis0[a * n1 + j]` is the face between cells `(a-1, j)` and `(a, j)`;
/// `axis1[i * m + b]` the face between `(i, b-1)` and `(i, b)` with `m`
/// faces per row (`n1 + 1` on the rectangle, `n1` on the periodic annulus,
/// where `b - 1` wraps).
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub axis0: Vec<f64>,
    pub axis1: Vec<f64>,
}

impl FaceField {
    pub fn max_abs(&self) -> f64 {
        self.axis0.iter().chain(&self.axis1).fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn l1(&self) -> f64 {
        self.axis0.iter().chain(&self.axis1).map(|x| x.abs()).sum()
    }
}
