//! Initial data: mollification of raw data and seeded positive test functions.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Geometry, Grid, ScalarField};

/// Mollifier width as a fraction of the domain diameter per unit `eps`.
pub const MOLLIFIER_ALPHA: f64 = 0.5;
/// Gaussian kernels are truncated at this many standard deviations.
const KERNEL_CUTOFF: f64 = 3.0;
/// Floor added to every generated test function.
pub const TEST_FUNCTION_FLOOR: f64 = 0.1;

/// Truncated discrete Gaussian with even reflection at Neumann boundaries
/// and wrap-around on the periodic annulus axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    /// Physical standard deviation.
    pub width: f64,
}

impl MollifierSpec {
    pub fn for_eps(grid: &Grid, eps: f64) -> Self {
        MollifierSpec { width: MOLLIFIER_ALPHA * eps * grid.geometry().diameter() }
    }

    /// Normalised one-sided weights `w[0..=radius]` for cell spacing `h`.
    pub fn weights(&self, h: f64) -> Vec<f64> {
        if self.width <= 0.0 {
            return vec![1.0];
        }
        let s = self.width / h;
        let radius = (KERNEL_CUTOFF * s).floor() as usize;
        let raw: Vec<f64> = (0..=radius).map(|k| (-0.5 * (k as f64 / s).powi(2)).exp()).collect();
        let total = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
        raw.into_iter().map(|w| w / total).collect()
    }
}

fn reflect(x: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = x.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Separable convolution. Every output cell is a convex combination of input cells.
pub fn convolve(grid: &Grid, f: &ScalarField, spec: MollifierSpec) -> ScalarField {
    let (n0, n1) = grid.shape();
    let (h0, h1) = grid.spacing();
    let v = f.values();

    let w0 = spec.weights(h0);
    let mut pass0 = vec![0.0; v.len()];
    for i in 0..n0 {
        for j in 0..n1 {
            let mut s = w0[0] * v[grid.idx(i, j)];
            for (k, w) in w0.iter().enumerate().skip(1) {
                let k = k as isize;
                s += w * (v[grid.idx(reflect(i as isize - k, n0), j)] + v[grid.idx(reflect(i as isize + k, n0), j)]);
            }
            pass0[grid.idx(i, j)] = s;
        }
    }
    if n1 == 1 {
        return ScalarField::new(pass0);
    }

    let periodic = grid.is_periodic_axis1();
    let mut out = vec![0.0; v.len()];
    for i in 0..n0 {
        let h = match grid.geometry() {
            Geometry::Annulus { .. } => grid.coords(grid.idx(i, 0)).a * h1,
            _ => h1,
        };
        let w1 = spec.weights(h);
        let wrap = |j: isize| if periodic { j.rem_euclid(n1 as isize) as usize } else { reflect(j, n1) };
        for j in 0..n1 {
            let mut s = w1[0] * pass0[grid.idx(i, j)];
            for (k, w) in w1.iter().enumerate().skip(1) {
                let k = k as isize;
                s += w * (pass0[grid.idx(i, wrap(j as isize - k))] + pass0[grid.idx(i, wrap(j as isize + k))]);
            }
            out[grid.idx(i, j)] = s;
        }
    }
    ScalarField::new(out)
}

/// `sum u ln u * vol` with `0 ln 0 = 0`.
pub fn entropy(grid: &Grid, u: &ScalarField) -> f64 {
    grid.integrate_with(|k| xlogx(u[k]))
}

#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Smooth nonnegative approximation of `raw` with exactly the same mass.
pub fn mollify_u0(grid: &Grid, raw: &ScalarField, eps: f64) -> Result<ScalarField> {
    grid.check_field(raw)?;
    raw.check_nonnegative()?;
    let mass = grid.integrate(raw);
    if !(mass > 0.0) {
        return Err(Error::ZeroField);
    }
    let smooth = convolve(grid, raw, MollifierSpec::for_eps(grid, eps));
    let scale = mass / grid.integrate(&smooth);
    Ok(smooth.map(|x| x * scale))
}

/// `(kernel * sqrt(raw))^2`; never exceeds `max(raw)`.
pub fn mollify_v0(grid: &Grid, raw: &ScalarField, eps: f64) -> Result<ScalarField> {
    grid.check_field(raw)?;
    raw.check_positive()?;
    let root = convolve(grid, &raw.map(f64::sqrt), MollifierSpec::for_eps(grid, eps));
    Ok(root.map(|w| w * w))
}

/// Initial data with the derived quantities used throughout.
#[derive(Debug, Clone)]
pub struct InitialPair {
    pub u0: ScalarField,
    pub v0: ScalarField,
    pub mass: f64,
    pub mu: f64,
    pub v_l1: f64,
    pub v_l2: f64,
    pub v_linf: f64,
    pub entropy: f64,
    /// `int |grad v0|^2 / v0`
    pub v_fisher: f64,
}

impl InitialPair {
    /// Validates `u0 >= 0`, `u0 != 0`, `v0 >= 0`. A vanishing `v0` is allowed
    /// for pure-diffusion runs, in which case `v_fisher` is reported as zero.
    pub fn new(grid: &Grid, u0: ScalarField, v0: ScalarField) -> Result<Self> {
        grid.check_field(&u0)?;
        grid.check_field(&v0)?;
        u0.check_nonnegative()?;
        v0.check_nonnegative()?;
        let mass = grid.integrate(&u0);
        if !(mass > 0.0) {
            return Err(Error::ZeroField);
        }
        let gsq = grid.grad_sq(&v0);
        let v_fisher = grid.integrate_with(|k| if v0[k] > 0.0 { gsq[k] / v0[k] } else { 0.0 });
        Ok(InitialPair {
            mu: mass / grid.measure(),
            mass,
            v_l1: grid.integrate_with(|k| v0[k].abs()),
            v_l2: grid.integrate_with(|k| v0[k] * v0[k]).sqrt(),
            v_linf: v0.max_abs(),
            entropy: entropy(grid, &u0),
            v_fisher,
            u0,
            v0,
        })
    }

    /// Mollify raw data at regularization `eps`.
    pub fn mollified(grid: &Grid, raw_u: &ScalarField, raw_v: &ScalarField, eps: f64) -> Result<Self> {
        let u0 = mollify_u0(grid, raw_u, eps)?;
        let v0 = if raw_v.values().iter().all(|&x| x == 0.0) {
            raw_v.clone()
        } else {
            mollify_v0(grid, raw_v, eps)?
        };
        InitialPair::new(grid, u0, v0)
    }
}

/// Named initial-data scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// `u0 = mu`, `v0 = v`.
    Homogeneous { mu: f64, v: f64 },
    /// `u0 = floor + amplitude * bump(center, width)`, `v0 = v`.
    GaussianBump { floor: f64, amplitude: f64, center: [f64; 2], width: f64, v: f64 },
    TwoBumps {
        floor: f64,
        amplitude: f64,
        centers: [[f64; 2]; 2],
        width: f64,
        v: f64,
    },
    /// Random low Fourier content in both components, drawn from `seed`.
    RandomFourier { seed: u64, modes: usize, amplitude: f64, floor: f64, v: f64 },
    /// `u0 = mu + amplitude * cos(pi x / L)` on the interval, `v0 = v`
    /// (use `v = 0` for the pure heat-equation mode).
    CosineMode { mu: f64, amplitude: f64, v: f64 },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Homogeneous { .. } => "homogeneous",
            Scenario::GaussianBump { .. } => "gaussian_bump",
            Scenario::TwoBumps { .. } => "two_bumps",
            Scenario::RandomFourier { .. } => "random_fourier",
            Scenario::CosineMode { .. } => "cosine_mode",
        }
    }

    /// Raw (unmollified) `(u0, v0)` on `grid`. Bump centres are given in
    /// native coordinates (`x`,`y` or `r`,`theta`).
    pub fn raw(&self, grid: &Grid) -> Result<(ScalarField, ScalarField)> {
        let check = |x: f64, what: &str| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(Error::Precondition(format!("scenario {}: {what} must be finite and nonnegative", self.name())))
            }
        };
        match *self {
            Scenario::Homogeneous { mu, v } => {
                check(mu, "mu")?;
                check(v, "v")?;
                Ok((grid.constant(mu), grid.constant(v)))
            }
            Scenario::GaussianBump { floor, amplitude, center, width, v } => {
                check(floor, "floor")?;
                check(amplitude, "amplitude")?;
                check(v, "v")?;
                let u = grid.field_from_fn(|p| floor + amplitude * neumann_bump(grid.geometry(), [p.a, p.b], center, width));
                Ok((u, grid.constant(v)))
            }
            Scenario::TwoBumps { floor, amplitude, centers, width, v } => {
                check(floor, "floor")?;
                check(amplitude, "amplitude")?;
                check(v, "v")?;
                let g = grid.geometry();
                let u = grid.field_from_fn(|p| {
                    floor
                        + amplitude
                            * (neumann_bump(g, [p.a, p.b], centers[0], width) + neumann_bump(g, [p.a, p.b], centers[1], width))
                });
                Ok((u, grid.constant(v)))
            }
            Scenario::RandomFourier { seed, modes, amplitude, floor, v } => {
                check(floor, "floor")?;
                check(amplitude, "amplitude")?;
                check(v, "v")?;
                let cu = fourier_coefficients(seed, modes);
                let u = fourier_sum(grid, &cu, &fourier_phases(seed, modes), floor, amplitude);
                // v0 in (0, v]: normalised by the largest possible value of the sum
                let vseed = seed.wrapping_add(0x9e37_79b9);
                let cv = fourier_coefficients(vseed, modes);
                let top = 1.0 + 2.0 * cv.iter().sum::<f64>();
                let vf = fourier_sum(grid, &cv, &fourier_phases(vseed, modes), 1.0, 1.0).map(|x| v * x / top);
                Ok((u, vf))
            }
            Scenario::CosineMode { mu, amplitude, v } => {
                let Geometry::Interval { length } = grid.geometry() else {
                    return Err(Error::Precondition("cosine_mode scenario needs an interval".into()));
                };
                if amplitude.abs() > mu {
                    return Err(Error::Precondition("cosine_mode needs |amplitude| <= mu".into()));
                }
                check(v, "v")?;
                Ok((grid.field_from_fn(|p| mu + amplitude * (PI * p.x / length).cos()), grid.constant(v)))
            }
        }
    }
}

/// Native-coordinate period/extent data used by the bump constructions.
fn axis_extents(g: Geometry) -> ((f64, f64), Option<(f64, f64)>) {
    match g {
        Geometry::Interval { length } => ((0.0, length), None),
        Geometry::Rectangle { lx, ly } => ((0.0, lx), Some((0.0, ly))),
        Geometry::Annulus { r0, r1 } => ((r0, r1), None),
    }
}

/// Gaussian in one reflected coordinate: images across both ends make the
/// derivative vanish at the walls up to `exp(-(extent)^2 / (2 w^2))`.
fn reflected_gauss(x: f64, c: f64, lo: f64, hi: f64, w: f64) -> f64 {
    let g = |d: f64| (-0.5 * (d / w).powi(2)).exp();
    g(x - c) + g(x - (2.0 * lo - c)) + g(x - (2.0 * hi - c))
}

/// Smooth bump in `[0, 1]`-ish range that satisfies the Neumann condition.
/// On the annulus the angular profile is a periodic von Mises bump.
pub fn neumann_bump(g: Geometry, p: [f64; 2], center: [f64; 2], width: f64) -> f64 {
    let ((lo0, hi0), ax1) = axis_extents(g);
    let radial = reflected_gauss(p[0], center[0], lo0, hi0, width);
    match g {
        Geometry::Interval { .. } => radial,
        Geometry::Rectangle { .. } => {
            let (lo1, hi1) = ax1.unwrap();
            radial * reflected_gauss(p[1], center[1], lo1, hi1, width)
        }
        Geometry::Annulus { .. } => {
            // angular width measured as arc length at the bump radius
            let kappa = (center[0] / width).powi(2);
            radial * (kappa * ((p[1] - center[1]).cos() - 1.0)).exp()
        }
    }
}

/// Nonnegative coefficients `a_k`, `k = 1..=modes`, decaying like `1/k`.
pub fn fourier_coefficients(seed: u64, modes: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=modes).map(|k| rng.gen_range(0.0..1.0) / k as f64).collect()
}

/// Angular phases for the annulus modes.
fn fourier_phases(seed: u64, modes: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_f00d);
    (0..modes).map(|_| rng.gen_range(0.0..2.0 * PI)).collect()
}

/// `floor + scale * sum_k a_k (1 + m_k(p))` where `m_k` is a Neumann mode with
/// `|m_k| <= 1`, so the sum is at least `floor`.
fn fourier_sum(grid: &Grid, coeffs: &[f64], phases: &[f64], floor: f64, scale: f64) -> ScalarField {
    let g = grid.geometry();
    grid.field_from_fn(|p| {
        let mut s = 0.0;
        for (k, a) in coeffs.iter().enumerate() {
            let k1 = (k + 1) as f64;
            let mode = match g {
                Geometry::Interval { length } => (k1 * PI * p.x / length).cos(),
                Geometry::Rectangle { lx, ly } => {
                    let kx = ((k % 3) + 1) as f64;
                    let ky = (((k / 3) % 3) + (k % 2)) as f64;
                    (kx * PI * p.x / lx).cos() * (ky * PI * p.y / ly).cos()
                }
                Geometry::Annulus { r0, r1 } => {
                    let kr = (k % 3) as f64 + 1.0;
                    let m = ((k / 3) % 4) as f64 + (k % 2) as f64;
                    (kr * PI * (p.a - r0) / (r1 - r0)).cos() * (m * p.b + phases[k]).cos()
                }
            };
            s += a * (1.0 + mode);
        }
        floor + scale * s
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunctionKind {
    LowFourierPositive,
    /// Bump of the given amplitude on the `0.1` floor; centre and width are seeded.
    BumpPlusFloor { amplitude: f64 },
    /// Depends only on the radius (annulus) or only on `x` (interval,
    /// rectangle), with seeded cosine coefficients.
    Radial,
}

/// Number of modes used by the Fourier-type test functions.
pub const TEST_FUNCTION_MODES: usize = 4;

/// Strictly positive, Neumann-compatible test function with `min >= 0.1`.
pub fn gen_test_function(seed: u64, grid: &Grid, kind: TestFunctionKind) -> ScalarField {
    let g = grid.geometry();
    match kind {
        TestFunctionKind::LowFourierPositive => {
            let coeffs = fourier_coefficients(seed, TEST_FUNCTION_MODES);
            fourier_sum(grid, &coeffs, &fourier_phases(seed, TEST_FUNCTION_MODES), TEST_FUNCTION_FLOOR, 1.0)
        }
        TestFunctionKind::BumpPlusFloor { amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ((lo0, hi0), ax1) = axis_extents(g);
            let span0 = hi0 - lo0;
            let c0 = lo0 + span0 * rng.gen_range(0.2..0.8);
            let c1 = match (g, ax1) {
                (Geometry::Annulus { .. }, _) => rng.gen_range(0.0..2.0 * PI),
                (_, Some((lo1, hi1))) => lo1 + (hi1 - lo1) * rng.gen_range(0.2..0.8),
                _ => 0.0,
            };
            let width = span0 * rng.gen_range(0.08..0.16);
            grid.field_from_fn(|p| TEST_FUNCTION_FLOOR + amplitude.abs() * neumann_bump(g, [p.a, p.b], [c0, c1], width))
        }
        TestFunctionKind::Radial => {
            let coeffs = fourier_coefficients(seed, TEST_FUNCTION_MODES);
            let (lo, hi) = axis_extents(g).0;
            grid.field_from_fn(|p| {
                let s: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * (1.0 + ((k + 1) as f64 * PI * (p.a - lo) / (hi - lo)).cos()))
                    .sum();
                TEST_FUNCTION_FLOOR + s
            })
        }
    }
}
