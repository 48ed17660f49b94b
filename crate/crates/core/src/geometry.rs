//! Toroidal surfaces and the differential geometry the force kernel needs.
//!
//! Surfaces are sampled on a uniform `n_theta x n_zeta` grid over the full
//! torus, `theta_i = 2 pi i / n_theta`, `zeta_j = 2 pi j / n_zeta`. Grid arrays
//! are flattened with index `i * n_zeta + j`.
//!
//! All derivatives of the embedding come from the analytic Fourier series.
//! The mean-curvature sum `2H = div_S n` is taken from the second fundamental
//! form, which also gives the divergence of the tangent projector:
//! `div_S(pi v) = -2H <v, n>` for any constant vector `v`.

use std::f64::consts::TAU;
use std::str::FromStr;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// Position and derivatives of a parametric surface at one `(theta, zeta)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub r: Vec3,
    pub r_t: Vec3,
    pub r_z: Vec3,
    pub r_tt: Vec3,
    pub r_tz: Vec3,
    pub r_zz: Vec3,
}

/// A doubly periodic parametrization of a closed surface.
pub trait ParametricSurface: Sync {
    fn point(&self, theta: f64, zeta: f64) -> SurfacePoint;

    /// Optional per-point orientation override for the raw normal
    /// `r_zeta x r_theta`. `None` lets the grid orient globally from the
    /// sign of the enclosed volume.
    fn normal_sign(&self, _theta: f64, _zeta: f64) -> Option<f64> {
        None
    }
}

/// One Fourier harmonic of a boundary in cylindrical `(R, Z)` coordinates.
///
/// Contributes `r_cos cos(m theta - n nfp zeta) + r_sin sin(...)` to `R` and
/// the analogous `z_cos`, `z_sin` terms to `Z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub m: i32,
    pub n: i32,
    pub r_cos: f64,
    pub r_sin: f64,
    pub z_cos: f64,
    pub z_sin: f64,
}

/// Toroidal surface given as a VMEC-style Fourier table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierSurface {
    pub modes: Vec<FourierMode>,
    pub n_fp: u32,
}

impl FourierSurface {
    pub fn new(modes: Vec<FourierMode>, n_fp: u32) -> Result<Self> {
        let surface = Self { modes, n_fp };
        surface.validate()?;
        Ok(surface)
    }

    /// Circular-cross-section torus of major radius `major` and minor radius `minor`.
    pub fn circular_torus(major: f64, minor: f64) -> Self {
        Self {
            modes: vec![
                FourierMode { m: 0, n: 0, r_cos: major, r_sin: 0.0, z_cos: 0.0, z_sin: 0.0 },
                FourierMode { m: 1, n: 0, r_cos: minor, r_sin: 0.0, z_cos: 0.0, z_sin: minor },
            ],
            n_fp: 1,
        }
    }

    pub fn major_radius(&self) -> f64 {
        self.modes
            .iter()
            .filter(|md| md.m == 0 && md.n == 0)
            .map(|md| md.r_cos)
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fp == 0 {
            return Err(Error::InvalidInput("n_fp must be positive".into()));
        }
        if self.modes.iter().any(|md| md.m < 0) {
            return Err(Error::InvalidInput("poloidal mode numbers must be >= 0".into()));
        }
        let finite = self.modes.iter().all(|md| {
            md.r_cos.is_finite() && md.r_sin.is_finite() && md.z_cos.is_finite() && md.z_sin.is_finite()
        });
        if !finite {
            return Err(Error::InvalidInput("non-finite Fourier coefficient".into()));
        }
        if self.major_radius() <= 0.0 {
            return Err(Error::InvalidInput(
                "the (m=0, n=0) radial coefficient must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Write the table in the same text format [`FromStr`] reads.
    pub fn to_table(&self) -> String {
        let mut out = format!("nfp {}\n# m n r_cos r_sin z_cos z_sin\n", self.n_fp);
        for md in &self.modes {
            out.push_str(&format!(
                "{} {} {:e} {:e} {:e} {:e}\n",
                md.m, md.n, md.r_cos, md.r_sin, md.z_cos, md.z_sin
            ));
        }
        out
    }
}

impl FromStr for FourierSurface {
    type Err = Error;

    /// Parse one mode per line: `m n r_cos r_sin z_cos z_sin`, separated by
    /// whitespace or commas. `#` starts a comment. An optional `nfp <k>` line
    /// sets the number of field periods (default 1).
    fn from_str(text: &str) -> Result<Self> {
        let mut modes = Vec::new();
        let mut n_fp = 1u32;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if fields[0].eq_ignore_ascii_case("nfp") {
                if fields.len() != 2 {
                    return Err(Error::Parse { line: line_no, msg: "expected `nfp <integer>`".into() });
                }
                n_fp = fields[1].parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("invalid field-period count `{}`", fields[1]),
                })?;
                continue;
            }
            if fields.len() != 6 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected 6 fields (m n r_cos r_sin z_cos z_sin), found {}", fields.len()),
                });
            }
            let int = |s: &str| {
                s.parse::<i32>()
                    .map_err(|_| Error::Parse { line: line_no, msg: format!("invalid integer `{s}`") })
            };
            let float = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { line: line_no, msg: format!("invalid number `{s}`") })
            };
            modes.push(FourierMode {
                m: int(fields[0])?,
                n: int(fields[1])?,
                r_cos: float(fields[2])?,
                r_sin: float(fields[3])?,
                z_cos: float(fields[4])?,
                z_sin: float(fields[5])?,
            });
        }
        if modes.is_empty() {
            return Err(Error::Parse { line: 0, msg: "no Fourier modes found".into() });
        }
        FourierSurface::new(modes, n_fp)
    }
}

impl ParametricSurface for FourierSurface {
    fn point(&self, theta: f64, zeta: f64) -> SurfacePoint {
        // R, Z and their partial derivatives up to second order.
        let (mut r, mut r_t, mut r_z, mut r_tt, mut r_tz, mut r_zz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut z, mut z_t, mut z_z, mut z_tt, mut z_tz, mut z_zz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let nfp = self.n_fp as f64;
        for md in &self.modes {
            let km = md.m as f64;
            let kn = -(md.n as f64) * nfp;
            let (s, c) = (km * theta + kn * zeta).sin_cos();
            let val = |a: f64, b: f64| a * c + b * s;
            let der = |a: f64, b: f64| -a * s + b * c;
            r += val(md.r_cos, md.r_sin);
            z += val(md.z_cos, md.z_sin);
            let dr = der(md.r_cos, md.r_sin);
            let dz = der(md.z_cos, md.z_sin);
            r_t += km * dr;
            r_z += kn * dr;
            z_t += km * dz;
            z_z += kn * dz;
            let v_r = val(md.r_cos, md.r_sin);
            let v_z = val(md.z_cos, md.z_sin);
            r_tt -= km * km * v_r;
            r_tz -= km * kn * v_r;
            r_zz -= kn * kn * v_r;
            z_tt -= km * km * v_z;
            z_tz -= km * kn * v_z;
            z_zz -= kn * kn * v_z;
        }
        let (sp, cp) = zeta.sin_cos();
        SurfacePoint {
            r: Vec3::new(r * cp, r * sp, z),
            r_t: Vec3::new(r_t * cp, r_t * sp, z_t),
            r_z: Vec3::new(r_z * cp - r * sp, r_z * sp + r * cp, z_z),
            r_tt: Vec3::new(r_tt * cp, r_tt * sp, z_tt),
            r_tz: Vec3::new(r_tz * cp - r_t * sp, r_tz * sp + r_t * cp, z_tz),
            r_zz: Vec3::new(
                r_zz * cp - 2.0 * r_z * sp - r * cp,
                r_zz * sp + 2.0 * r_z * cp - r * sp,
                z_zz,
            ),
        }
    }
}

/// Sampled surface with frames, metric, and curvature at every grid node.
#[derive(Clone, Debug)]
pub struct SurfaceGrid {
    pub n_theta: usize,
    pub n_zeta: usize,
    pub points: Vec<Vec3>,
    pub d_theta_r: Vec<Vec3>,
    pub d_zeta_r: Vec<Vec3>,
    pub d_theta_theta_r: Vec<Vec3>,
    pub d_theta_zeta_r: Vec<Vec3>,
    pub d_zeta_zeta_r: Vec<Vec3>,
    /// Outward unit normal.
    pub normal: Vec<Vec3>,
    /// `|d_theta r x d_zeta r|` in m^2/rad^2.
    pub area_element: Vec<f64>,
    /// `2H = div_S n` (sum of principal curvatures, positive on a sphere).
    pub mean_curvature_sum: Vec<f64>,
    pub gauss_curvature: Vec<f64>,
    /// Dual (cotangent) frame: `dual_theta . d_theta_r = 1`, `dual_theta . d_zeta_r = 0`.
    pub dual_theta: Vec<Vec3>,
    pub dual_zeta: Vec<Vec3>,
    /// Lazily computed self-cell weights of the singular force quadrature.
    pub(crate) self_cell: std::sync::OnceLock<Vec<[f64; 2]>>,
}

impl SurfaceGrid {
    /// Sample `surface` on a uniform `n_theta x n_zeta` grid.
    pub fn new<S: ParametricSurface + ?Sized>(surface: &S, n_theta: usize, n_zeta: usize) -> Result<Self> {
        if n_theta < 4 || n_zeta < 4 {
            return Err(Error::InvalidInput(format!(
                "grid sizes must be >= 4 (got {n_theta} x {n_zeta})"
            )));
        }
        let n = n_theta * n_zeta;
        let samples: Vec<(SurfacePoint, Option<f64>)> = (0..n)
            .into_par_iter()
            .map(|idx| {
                let (th, ze) = angles(idx, n_theta, n_zeta);
                (surface.point(th, ze), surface.normal_sign(th, ze))
            })
            .collect();

        let mut raw_normals = Vec::with_capacity(n);
        let mut area_element = Vec::with_capacity(n);
        for (idx, (p, _)) in samples.iter().enumerate() {
            let raw = p.r_z.cross(&p.r_t);
            let area = raw.norm();
            let scale = p.r_t.norm() * p.r_z.norm();
            if !(area > 1e-14 * scale) || !area.is_finite() {
                return Err(Error::DegenerateSurface { i_theta: idx / n_zeta, i_zeta: idx % n_zeta });
            }
            raw_normals.push(raw / area);
            area_element.push(area);
        }

        // Global orientation from the sign of the enclosed volume, (1/3) \oint r . n dS.
        let volume: f64 = samples
            .iter()
            .zip(&raw_normals)
            .zip(&area_element)
            .map(|(((p, _), nrm), a)| p.r.dot(nrm) * a)
            .sum();
        let global = if volume < 0.0 { -1.0 } else { 1.0 };

        let mut grid = SurfaceGrid {
            n_theta,
            n_zeta,
            points: Vec::with_capacity(n),
            d_theta_r: Vec::with_capacity(n),
            d_zeta_r: Vec::with_capacity(n),
            d_theta_theta_r: Vec::with_capacity(n),
            d_theta_zeta_r: Vec::with_capacity(n),
            d_zeta_zeta_r: Vec::with_capacity(n),
            normal: Vec::with_capacity(n),
            area_element,
            mean_curvature_sum: Vec::with_capacity(n),
            gauss_curvature: Vec::with_capacity(n),
            dual_theta: Vec::with_capacity(n),
            dual_zeta: Vec::with_capacity(n),
            self_cell: std::sync::OnceLock::new(),
        };
        for ((p, sign), raw) in samples.into_iter().zip(raw_normals) {
            let nrm = raw * sign.unwrap_or(global);
            let (e, f, g) = (p.r_t.dot(&p.r_t), p.r_t.dot(&p.r_z), p.r_z.dot(&p.r_z));
            let det = e * g - f * f;
            let (l2, m2, n2) = (p.r_tt.dot(&nrm), p.r_tz.dot(&nrm), p.r_zz.dot(&nrm));
            grid.mean_curvature_sum.push(-(e * n2 - 2.0 * f * m2 + g * l2) / det);
            grid.gauss_curvature.push((l2 * n2 - m2 * m2) / det);
            grid.dual_theta.push((p.r_t * g - p.r_z * f) / det);
            grid.dual_zeta.push((p.r_z * e - p.r_t * f) / det);
            grid.points.push(p.r);
            grid.d_theta_r.push(p.r_t);
            grid.d_zeta_r.push(p.r_z);
            grid.d_theta_theta_r.push(p.r_tt);
            grid.d_theta_zeta_r.push(p.r_tz);
            grid.d_zeta_zeta_r.push(p.r_zz);
            grid.normal.push(nrm);
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index(&self, i_theta: usize, i_zeta: usize) -> usize {
        i_theta * self.n_zeta + i_zeta
    }

    pub fn angles(&self, idx: usize) -> (f64, f64) {
        angles(idx, self.n_theta, self.n_zeta)
    }

    pub fn d_theta(&self) -> f64 {
        TAU / self.n_theta as f64
    }

    pub fn d_zeta(&self) -> f64 {
        TAU / self.n_zeta as f64
    }

    /// Trapezoidal quadrature weight `dS` of node `idx` (m^2).
    pub fn weight(&self, idx: usize) -> f64 {
        self.area_element[idx] * self.d_theta() * self.d_zeta()
    }

    pub fn weights(&self) -> Vec<f64> {
        let cell = self.d_theta() * self.d_zeta();
        self.area_element.iter().map(|a| a * cell).collect()
    }

    pub fn area(&self) -> f64 {
        self.area_element.iter().sum::<f64>() * self.d_theta() * self.d_zeta()
    }

    /// Integrate a nodal scalar field with the trapezoidal rule.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        assert_eq!(f.len(), self.len());
        f.iter().zip(&self.area_element).map(|(v, a)| v * a).sum::<f64>() * self.d_theta() * self.d_zeta()
    }

    /// Smallest physical edge length of any grid cell (m).
    pub fn min_spacing(&self) -> f64 {
        let (dt, dz) = (self.d_theta(), self.d_zeta());
        self.d_theta_r
            .iter()
            .zip(&self.d_zeta_r)
            .map(|(a, b)| (a.norm() * dt).min(b.norm() * dz))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest physical edge length of any grid cell (m).
    pub fn max_spacing(&self) -> f64 {
        let (dt, dz) = (self.d_theta(), self.d_zeta());
        self.d_theta_r
            .iter()
            .zip(&self.d_zeta_r)
            .map(|(a, b)| (a.norm() * dt).max(b.norm() * dz))
            .fold(0.0, f64::max)
    }

    /// Principal curvatures `(k_min, k_max)` at node `idx`.
    pub fn principal_curvatures(&self, idx: usize) -> (f64, f64) {
        let h = 0.5 * self.mean_curvature_sum[idx];
        let disc = (h * h - self.gauss_curvature[idx]).max(0.0).sqrt();
        (h - disc, h + disc)
    }

    /// Inverse metric `(g^tt, g^tz, g^zz)` at node `idx`.
    pub fn inverse_metric(&self, idx: usize) -> (f64, f64, f64) {
        let (ut, uz) = (self.dual_theta[idx], self.dual_zeta[idx]);
        (ut.dot(&ut), ut.dot(&uz), uz.dot(&uz))
    }

    pub fn same_shape(&self, other: &SurfaceGrid) -> bool {
        self.n_theta == other.n_theta && self.n_zeta == other.n_zeta
    }
}

fn angles(idx: usize, n_theta: usize, n_zeta: usize) -> (f64, f64) {
    let (i, j) = (idx / n_zeta, idx % n_zeta);
    (TAU * i as f64 / n_theta as f64, TAU * j as f64 / n_zeta as f64)
}

/// Orthogonal projection of `v` onto the tangent plane with unit normal `n`.
pub fn project_tangent(n: &Vec3, v: &Vec3) -> Vec3 {
    v - n * v.dot(n)
}

/// `div_S(pi_x v)` at every node for a constant ambient vector `v`.
pub fn projector_divergence(grid: &SurfaceGrid, v: &Vec3) -> Vec<f64> {
    grid.normal
        .iter()
        .zip(&grid.mean_curvature_sum)
        .map(|(n, h2)| -h2 * v.dot(n))
        .collect()
}

/// The vector `div_x(pi_x) = sum_i div_S(pi e_i) e_i = -2H n` at every node.
pub fn projector_divergence_vector(grid: &SurfaceGrid) -> Vec<Vec3> {
    grid.normal
        .iter()
        .zip(&grid.mean_curvature_sum)
        .map(|(n, h2)| -n * *h2)
        .collect()
}

/// How to differentiate sampled fields along the grid angles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiffMethod {
    /// FFT differentiation; exact for trigonometric polynomials the grid resolves.
    Spectral,
    /// Fourth-order centered periodic differences.
    FiniteDifference,
}

/// Derivatives `(d/dtheta, d/dzeta)` of a nodal scalar field.
pub fn angle_derivatives(
    n_theta: usize,
    n_zeta: usize,
    f: &[f64],
    method: DiffMethod,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(f.len(), n_theta * n_zeta);
    let mut d_t = vec![0.0; f.len()];
    let mut d_z = vec![0.0; f.len()];
    let mut line = Vec::new();
    for j in 0..n_zeta {
        line.clear();
        line.extend((0..n_theta).map(|i| f[i * n_zeta + j]));
        let d = differentiate_periodic(&line, method);
        for i in 0..n_theta {
            d_t[i * n_zeta + j] = d[i];
        }
    }
    for i in 0..n_theta {
        let row = &f[i * n_zeta..(i + 1) * n_zeta];
        let d = differentiate_periodic(row, method);
        d_z[i * n_zeta..(i + 1) * n_zeta].copy_from_slice(&d);
    }
    (d_t, d_z)
}

/// Derivative of one period of samples on `[0, 2 pi)`.
pub fn differentiate_periodic(samples: &[f64], method: DiffMethod) -> Vec<f64> {
    let n = samples.len();
    match method {
        DiffMethod::FiniteDifference => {
            let h = TAU / n as f64;
            (0..n)
                .map(|i| {
                    let at = |k: isize| samples[(i as isize + k).rem_euclid(n as isize) as usize];
                    (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) / (12.0 * h)
                })
                .collect()
        }
        DiffMethod::Spectral => {
            let mut planner = FftPlanner::<f64>::new();
            let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
            planner.plan_fft_forward(n).process(&mut buf);
            for (k, c) in buf.iter_mut().enumerate() {
                let wave = if 2 * k < n {
                    k as f64
                } else if 2 * k == n {
                    0.0
                } else {
                    k as f64 - n as f64
                };
                *c *= Complex::new(0.0, wave);
            }
            planner.plan_fft_inverse(n).process(&mut buf);
            buf.iter().map(|c| c.re / n as f64).collect()
        }
    }
}

/// Tangential gradient `grad_S f = sum_a dual_a d_a f` of a nodal scalar field.
pub fn tangential_gradient(grid: &SurfaceGrid, f: &[f64], method: DiffMethod) -> Vec<Vec3> {
    let (d_t, d_z) = angle_derivatives(grid.n_theta, grid.n_zeta, f, method);
    (0..grid.len())
        .map(|i| grid.dual_theta[i] * d_t[i] + grid.dual_zeta[i] * d_z[i])
        .collect()
}

/// Surface divergence of a nodal ambient vector field by differentiating
/// `sqrt(g) V^a` along the grid; the normal part contributes `2H <V, n>`.
pub fn surface_divergence(grid: &SurfaceGrid, field: &[Vec3], method: DiffMethod) -> Vec<f64> {
    assert_eq!(field.len(), grid.len());
    let flux_t: Vec<f64> = (0..grid.len())
        .map(|i| grid.area_element[i] * grid.dual_theta[i].dot(&field[i]))
        .collect();
    let flux_z: Vec<f64> = (0..grid.len())
        .map(|i| grid.area_element[i] * grid.dual_zeta[i].dot(&field[i]))
        .collect();
    let (dt, _) = angle_derivatives(grid.n_theta, grid.n_zeta, &flux_t, method);
    let (_, dz) = angle_derivatives(grid.n_theta, grid.n_zeta, &flux_z, method);
    (0..grid.len())
        .map(|i| {
            (dt[i] + dz[i]) / grid.area_element[i]
                + grid.mean_curvature_sum[i] * grid.normal[i].dot(&field[i])
        })
        .collect()
}

/// `max |<y - x, n(x)>| / |y - x|^2` over all distinct node pairs.
///
/// Coincident nodes (a surface may cover a point more than once) are skipped.
pub fn geometric_bound_check(grid: &SurfaceGrid) -> f64 {
    let scale = grid.points.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1.0);
    let tol2 = (1e-9 * scale).powi(2);
    (0..grid.len())
        .into_par_iter()
        .map(|ix| {
            let (x, n) = (grid.points[ix], grid.normal[ix]);
            let mut best = 0.0f64;
            for (iy, y) in grid.points.iter().enumerate() {
                if iy == ix {
                    continue;
                }
                let r = y - x;
                let d2 = r.norm_squared();
                if d2 <= tol2 {
                    continue;
                }
                best = best.max(r.dot(&n).abs() / d2);
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn torus_grid(n: usize) -> SurfaceGrid {
        SurfaceGrid::new(&FourierSurface::circular_torus(1.0, 0.3), n, n).unwrap()
    }

    #[test]
    fn outward_normal_at_outboard_midplane() {
        let g = torus_grid(16);
        let n = g.normal[g.index(0, 0)];
        assert!((n - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn area_element_matches_closed_form() {
        let (major, minor) = (1.0, 0.3);
        let g = torus_grid(32);
        for idx in 0..g.len() {
            let (th, _) = g.angles(idx);
            let exact = minor * (major + minor * th.cos());
            assert!((g.area_element[idx] - exact).abs() < 1e-12);
        }
        assert!((g.area() - 4.0 * PI * PI * major * minor).abs() < 1e-10);
    }

    #[test]
    fn rejects_small_grid() {
        let s = FourierSurface::circular_torus(1.0, 0.3);
        assert!(matches!(SurfaceGrid::new(&s, 3, 8), Err(Error::InvalidInput(_))));
        assert!(SurfaceGrid::new(&s, 8, 3).is_err());
    }

    #[test]
    fn degenerate_surface_reports_location() {
        // zero minor radius collapses the tube onto a circle
        let s = FourierSurface::circular_torus(1.0, 0.0);
        match SurfaceGrid::new(&s, 8, 8) {
            Err(Error::DegenerateSurface { i_theta, i_zeta }) => assert_eq!((i_theta, i_zeta), (0, 0)),
            other => panic!("expected degenerate-surface error, got {other:?}"),
        }
    }

    #[test]
    fn torus_curvature_closed_form() {
        let (major, minor) = (1.0, 0.3);
        let g = torus_grid(24);
        for idx in 0..g.len() {
            let (th, _) = g.angles(idx);
            let rho = major + minor * th.cos();
            let h2 = 1.0 / minor + th.cos() / rho;
            let k = th.cos() / (minor * rho);
            assert!((g.mean_curvature_sum[idx] - h2).abs() < 1e-12);
            assert!((g.gauss_curvature[idx] - k).abs() < 1e-12);
        }
    }

    #[test]
    fn reversed_parametrization_still_outward() {
        let mut s = FourierSurface::circular_torus(1.0, 0.3);
        s.modes[1].z_sin = -0.3;
        let g = SurfaceGrid::new(&s, 12, 12).unwrap();
        assert!((g.normal[0] - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-14);
        assert!(g.mean_curvature_sum[0] > 0.0);
    }

    #[test]
    fn parse_table_with_comments_and_commas() {
        let text = "# winding surface\nnfp 3\n0 0 1.5 0 0 0\n1, 0, 0.4, 0, 0, 0.4  # circular\n1 1 0.05 0 0 0.05\n";
        let s: FourierSurface = text.parse().unwrap();
        assert_eq!(s.n_fp, 3);
        assert_eq!(s.modes.len(), 3);
        assert_eq!(s.modes[2].n, 1);
        let again: FourierSurface = s.to_table().parse().unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = "0 0 1 0 0 0\n1 0 0.3 0 zero 0.3\n".parse::<FourierSurface>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = "0 0 1 0 0\n".parse::<FourierSurface>().unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = "0 0 -1 0 0 0\n1 0 0.3 0 0 0.3\n".parse::<FourierSurface>().unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn spectral_derivative_is_exact_for_resolved_harmonics() {
        let n = 32;
        let f: Vec<f64> = (0..n).map(|i| (3.0 * TAU * i as f64 / n as f64).sin()).collect();
        let d = differentiate_periodic(&f, DiffMethod::Spectral);
        for (i, v) in d.iter().enumerate() {
            let exact = 3.0 * (3.0 * TAU * i as f64 / n as f64).cos();
            assert!((v - exact).abs() < 1e-12);
        }
        let d = differentiate_periodic(&f, DiffMethod::FiniteDifference);
        assert!((d[0] - 3.0).abs() < 0.02);
    }

    #[test]
    fn tangential_gradient_of_constant_vanishes() {
        let g = torus_grid(16);
        let f = vec![2.5; g.len()];
        for v in tangential_gradient(&g, &f, DiffMethod::Spectral) {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn tangential_gradient_of_sin_theta() {
        let minor = 0.3;
        let g = torus_grid(32);
        let f: Vec<f64> = (0..g.len()).map(|i| g.angles(i).0.sin()).collect();
        let grad = tangential_gradient(&g, &f, DiffMethod::Spectral);
        for (i, v) in grad.iter().enumerate() {
            let th = g.angles(i).0;
            assert!((v.norm() - th.cos().abs() / minor).abs() < 1e-6);
            assert!(v.dot(&g.normal[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn projector_is_idempotent_and_kills_normal() {
        let g = torus_grid(8);
        let v = Vec3::new(0.3, -1.2, 2.0);
        for n in &g.normal {
            let p = project_tangent(n, &v);
            assert!((project_tangent(n, &p) - p).norm() < 1e-15);
            assert!(project_tangent(n, n).norm() < 1e-15);
        }
    }

    #[test]
    fn projector_divergence_tangent_identity() {
        // the normal component carries all of div_S(pi v)
        let g = torus_grid(16);
        for (idx, n) in g.normal.iter().enumerate() {
            let tangent = g.d_theta_r[idx].normalize();
            let div = projector_divergence(&g, &tangent)[idx];
            assert!((div + g.mean_curvature_sum[idx] * tangent.dot(n)).abs() < 1e-15);
            assert!(div.abs() < 1e-12);
        }
    }

    #[test]
    fn projector_divergence_top_point_matches_finite_differences() {
        let g = torus_grid(64);
        let z = Vec3::z();
        let analytic = projector_divergence(&g, &z);
        let field: Vec<Vec3> = g.normal.iter().map(|n| project_tangent(n, &z)).collect();
        let fd = surface_divergence(&g, &field, DiffMethod::FiniteDifference);
        let top = g.index(16, 0); // theta = pi/2
        let rel = (analytic[top] - fd[top]).abs() / analytic[top].abs();
        assert!(rel < 1e-3, "relative error {rel}");
    }

    #[test]
    fn geometric_bound_on_torus_is_local_curvature_scale() {
        let g = torus_grid(32);
        let bound = geometric_bound_check(&g);
        let kmax = (0..g.len()).map(|i| g.principal_curvatures(i).1).fold(0.0, f64::max);
        assert!(bound.is_finite());
        assert!((bound - 0.5 * kmax).abs() < 0.05 * 0.5 * kmax, "bound {bound} vs {}", 0.5 * kmax);
    }
}
