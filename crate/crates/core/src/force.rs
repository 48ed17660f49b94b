//! Laplace force exerted by one current sheet on another.
//!
//! For `u = j1(y)`, `v = j2(x)`, `r = y - x`, `d = |r|` and
//! `c = 2H(x)/d + <r, n(x)>/d^3` the closed-form integrand is
//!
//! ```text
//! c [ (u.n) v - (u.v) n ] + (1/d) sum_a [ (u . d_a v) u^a - (u . u^a) d_a v ]
//! ```
//!
//! with `u^a` the dual tangent frame at `x`. Since every term is `u x (...)`,
//! the force factors as `L(y) = j1(y) x Bm(y)` with a regularized mean field
//! `Bm`; [`laplace_force`] uses that form, [`laplace_force_terms`] keeps the
//! four integrals apart. The self point `x = y` gets zero weight.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::currents::{current_from_potential, current_jacobian, CurrentJacobian, CurrentPotential, SurfaceCurrent};
use crate::geometry::{project_tangent, SurfaceGrid};
use crate::magnetics::field_at;
use crate::{Error, Result, Vec3, MU0_OVER_4PI};

/// Force per unit area (Pa) at every grid node, split along the normal.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceField {
    pub total: Vec<Vec3>,
    pub normal_component: Vec<f64>,
    pub tangential_component: Vec<Vec3>,
}

impl ForceField {
    /// Wrap raw force vectors and fill both components.
    pub fn from_total(grid: &SurfaceGrid, total: Vec<Vec3>) -> Self {
        let normal_component = total.iter().zip(&grid.normal).map(|(f, n)| f.dot(n)).collect();
        let tangential_component = total.iter().zip(&grid.normal).map(|(f, n)| project_tangent(n, f)).collect();
        Self { total, normal_component, tangential_component }
    }

    pub fn zeros(n: usize) -> Self {
        Self { total: vec![Vec3::zeros(); n], normal_component: vec![0.0; n], tangential_component: vec![Vec3::zeros(); n] }
    }

    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.total.iter().map(|f| f.norm()).collect()
    }

    /// `normal n + tangential`, which reproduces `total` up to rounding.
    pub fn recompose(&self, grid: &SurfaceGrid) -> Vec<Vec3> {
        self.normal_component
            .iter()
            .zip(&self.tangential_component)
            .zip(&grid.normal)
            .map(|((fn_, ft), n)| n * *fn_ + ft)
            .collect()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.total.iter().map(|f| f.norm()).fold(0.0, f64::max)
    }

    /// `(int |F|^2 dS)^(1/2)`.
    pub fn l2_norm(&self, grid: &SurfaceGrid) -> f64 {
        let sq: Vec<f64> = self.total.iter().map(|f| f.norm_squared()).collect();
        grid.integrate(&sq).sqrt()
    }

    /// `|self - other|_L2 / |other|_L2`.
    pub fn relative_l2_difference(&self, other: &ForceField, grid: &SurfaceGrid) -> f64 {
        let sq: Vec<f64> = self.total.iter().zip(&other.total).map(|(a, b)| (a - b).norm_squared()).collect();
        grid.integrate(&sq).sqrt() / other.l2_norm(grid)
    }

    /// `sum_y w_y F(y)` pairs with a linear combination of two fields.
    pub fn linear_combination(grid: &SurfaceGrid, a: f64, fa: &ForceField, b: f64, fb: &ForceField) -> ForceField {
        let total = fa.total.iter().zip(&fb.total).map(|(x, y)| x * a + y * b).collect();
        ForceField::from_total(grid, total)
    }
}

/// Recompute the normal and tangential parts of `force` from its total.
pub fn decompose(force: &ForceField, grid: &SurfaceGrid) -> ForceField {
    ForceField::from_total(grid, force.total.clone())
}

fn check_inputs(grid: &SurfaceGrid, j1: &SurfaceCurrent, j2: &SurfaceCurrent) -> Result<()> {
    if j1.len() != grid.len() || j2.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "grid has {} nodes, currents have {} and {}",
            grid.len(),
            j1.len(),
            j2.len()
        )));
    }
    if grid.mean_curvature_sum.len() != grid.len() || grid.dual_theta.len() != grid.len() {
        return Err(Error::InvalidInput("grid is missing curvature data".into()));
    }
    Ok(())
}

/// Per-source weights of the mean-field form: `Bm(y) = sum_x p/d + <r,n> a / d^3`.
struct SourceTerms {
    a: Vec<Vec3>,
    p: Vec<Vec3>,
}

fn source_terms(grid: &SurfaceGrid, v: &SurfaceCurrent) -> SourceTerms {
    let cell = grid.d_theta() * grid.d_zeta();
    let (a, p) = (0..grid.len())
        .map(|x| {
            let w = grid.area_element[x] * cell;
            let vxn = v.j[x].cross(&grid.normal[x]);
            let tang = grid.dual_theta[x].cross(&v.d_theta_j[x]) + grid.dual_zeta[x].cross(&v.d_zeta_j[x]);
            (vxn * w, (vxn * grid.mean_curvature_sum[x] + tang) * w)
        })
        .unzip();
    SourceTerms { a, p }
}

/// Treatment of the integrable `1/d` singularity at `x = y`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularQuadrature {
    /// Zero weight at the self point; first-order accurate.
    #[default]
    Exclude,
    /// Self point weighted by the local lattice correction of the `1/d` and
    /// curvature kernels, removing the first-order error.
    Corrected,
}

/// Per-node self weights `[c_inv_d, c_normal]` (parameter-space measure) for
/// the `1/d` kernel and the `<r, n>/d^3` kernel; zero when excluded.
fn self_weights(grid: &SurfaceGrid, quad: SingularQuadrature) -> Option<&[[f64; 2]]> {
    match quad {
        SingularQuadrature::Exclude => None,
        SingularQuadrature::Corrected => Some(grid.self_cell.get_or_init(|| self_cell_weights(grid))),
    }
}

/// Integral over the box `[-a, a] x [-b, b]` of a kernel homogeneous of
/// degree -1, given by its values `k(cos phi, sin phi)` on the unit circle.
fn box_integral(a: f64, b: f64, k: &impl Fn(f64, f64) -> f64) -> f64 {
    use std::f64::consts::PI;
    let corner = b.atan2(a);
    let segments = [(-corner, corner, true), (corner, PI - corner, false), (PI - corner, PI + corner, true), (PI + corner, 2.0 * PI - corner, false)];
    const N: usize = 128;
    let mut total = 0.0;
    for (lo, hi, vertical_edge) in segments {
        let step = (hi - lo) / N as f64;
        let mut seg = 0.0;
        for i in 0..=N {
            let (sn, cs) = (lo + i as f64 * step).sin_cos();
            let reach = if vertical_edge { a / cs.abs() } else { b / sn.abs() };
            let w = if i == 0 || i == N { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            seg += w * k(cs, sn) * reach;
        }
        total += seg * step / 3.0;
    }
    total
}

/// `lim (int_box K - sum'_box K)` over growing boxes of the parameter lattice,
/// extrapolated from two box sizes.
fn lattice_defect(dt: f64, dz: f64, k: &impl Fn(f64, f64) -> f64) -> f64 {
    let defect = |m: i64| {
        let mut sum = 0.0;
        for i in -m..=m {
            for j in -m..=m {
                if i == 0 && j == 0 {
                    continue;
                }
                let (s, t) = (i as f64 * dt, j as f64 * dz);
                let rho = s.hypot(t);
                sum += k(s / rho, t / rho) / rho;
            }
        }
        let half = m as f64 + 0.5;
        box_integral(half * dt, half * dz, k) - sum * dt * dz
    };
    2.0 * defect(16) - defect(8)
}

fn self_cell_weights(grid: &SurfaceGrid) -> Vec<[f64; 2]> {
    let (dt, dz) = (grid.d_theta(), grid.d_zeta());
    (0..grid.len())
        .into_par_iter()
        .map(|y| {
            let (rt, rz, n) = (grid.d_theta_r[y], grid.d_zeta_r[y], grid.normal[y]);
            let (e, f, g) = (rt.dot(&rt), rt.dot(&rz), rz.dot(&rz));
            let (l, m, nn) = (grid.d_theta_theta_r[y].dot(&n), grid.d_theta_zeta_r[y].dot(&n), grid.d_zeta_zeta_r[y].dot(&n));
            let q = move |c: f64, s: f64| e * c * c + 2.0 * f * c * s + g * s * s;
            let inv_d = move |c: f64, s: f64| 1.0 / q(c, s).sqrt();
            // <y - x, n(x)> / |y - x|^3 near x = y
            let normal = move |c: f64, s: f64| (l * c * c + 2.0 * m * c * s + nn * s * s) / (2.0 * q(c, s).powf(1.5));
            [lattice_defect(dt, dz, &inv_d), lattice_defect(dt, dz, &normal)]
        })
        .collect()
}

/// Regularized mean field `Bm` of `j2` at every node (T): the field whose
/// cross product with `j1(y)` gives the Laplace force.
pub fn mean_field(grid: &SurfaceGrid, j2: &SurfaceCurrent) -> Vec<Vec3> {
    mean_field_with(grid, j2, SingularQuadrature::default())
}

pub fn mean_field_with(grid: &SurfaceGrid, j2: &SurfaceCurrent, quad: SingularQuadrature) -> Vec<Vec3> {
    let src = source_terms(grid, j2);
    let selfw = self_weights(grid, quad);
    let cell = grid.d_theta() * grid.d_zeta();
    (0..grid.len())
        .into_par_iter()
        .map(|y| {
            let py = grid.points[y];
            let mut acc = Vec3::zeros();
            for x in 0..grid.len() {
                if x == y {
                    continue;
                }
                let r = py - grid.points[x];
                let inv_d = 1.0 / r.norm();
                let q = r.dot(&grid.normal[x]) * inv_d * inv_d * inv_d;
                acc += src.p[x] * inv_d + src.a[x] * q;
            }
            if let Some(sw) = selfw {
                acc += (src.p[y] * sw[y][0] + src.a[y] * sw[y][1]) / cell;
            }
            acc * MU0_OVER_4PI
        })
        .collect()
}

/// Closed-form Laplace force `L(j1, j2)` at every grid node (Pa).
pub fn laplace_force(grid: &SurfaceGrid, j1: &SurfaceCurrent, j2: &SurfaceCurrent) -> Result<ForceField> {
    laplace_force_with(grid, j1, j2, SingularQuadrature::default())
}

pub fn laplace_force_with(
    grid: &SurfaceGrid,
    j1: &SurfaceCurrent,
    j2: &SurfaceCurrent,
    quad: SingularQuadrature,
) -> Result<ForceField> {
    check_inputs(grid, j1, j2)?;
    let bm = mean_field_with(grid, j2, quad);
    let total = j1.j.iter().zip(&bm).map(|(u, b)| u.cross(b)).collect();
    Ok(ForceField::from_total(grid, total))
}

/// The four integrals of the closed form evaluated separately, each in Pa.
///
/// 0. `(1/d) [ 2H (u.n) v - (pi u . grad) v ]`
/// 1. `(u.n) <r,n>/d^3 v`
/// 2. `(1/d) [ -2H (u.v) n + grad_S (u.v) ]`
/// 3. `-(u.v) <r,n>/d^3 n`
pub fn laplace_force_terms(grid: &SurfaceGrid, j1: &SurfaceCurrent, j2: &SurfaceCurrent) -> Result<[Vec<Vec3>; 4]> {
    laplace_force_terms_with(grid, j1, j2, SingularQuadrature::default())
}

pub fn laplace_force_terms_with(
    grid: &SurfaceGrid,
    j1: &SurfaceCurrent,
    j2: &SurfaceCurrent,
    quad: SingularQuadrature,
) -> Result<[Vec<Vec3>; 4]> {
    check_inputs(grid, j1, j2)?;
    let cell = grid.d_theta() * grid.d_zeta();
    let selfw = self_weights(grid, quad);
    let per_target: Vec<[Vec3; 4]> = (0..grid.len())
        .into_par_iter()
        .map(|y| {
            let u = j1.j[y];
            let mut t = [Vec3::zeros(); 4];
            // w_over_d: dS/d, qw: <r, n> dS / d^3
            let mut add = |x: usize, w_over_d: f64, qw: f64| {
                let (n, h2) = (grid.normal[x], grid.mean_curvature_sum[x]);
                let (ut, uz) = (grid.dual_theta[x], grid.dual_zeta[x]);
                let (v, vt, vz) = (j2.j[x], j2.d_theta_j[x], j2.d_zeta_j[x]);
                let (un, uv) = (u.dot(&n), u.dot(&v));
                t[0] += (v * (h2 * un) - vt * u.dot(&ut) - vz * u.dot(&uz)) * w_over_d;
                t[1] += v * (un * qw);
                t[2] += (ut * u.dot(&vt) + uz * u.dot(&vz) - n * (h2 * uv)) * w_over_d;
                t[3] -= n * (uv * qw);
            };
            for x in 0..grid.len() {
                if x == y {
                    continue;
                }
                let r = grid.points[y] - grid.points[x];
                let d = r.norm();
                let w = grid.area_element[x] * cell / d;
                add(x, w, w * r.dot(&grid.normal[x]) / (d * d));
            }
            if let Some(sw) = selfw {
                add(y, grid.area_element[y] * sw[y][0], grid.area_element[y] * sw[y][1]);
            }
            t.map(|v| v * MU0_OVER_4PI)
        })
        .collect();
    let mut out: [Vec<Vec3>; 4] = Default::default();
    for t in per_target {
        for (k, v) in t.into_iter().enumerate() {
            out[k].push(v);
        }
    }
    Ok(out)
}

/// Characteristic grid spacing `h` used to scale offsets: half the smallest
/// node-to-node distance, i.e. the farthest a point on a grid line can be
/// from its nearest node.
pub fn grid_spacing(grid: &SurfaceGrid) -> f64 {
    0.5 * grid.min_spacing()
}

/// One finite-offset evaluation of the semi-sum force.
#[derive(Clone, Debug)]
pub struct EpsilonProbe {
    /// Offset distance (m).
    pub epsilon: f64,
    /// Grid spacing the offset is measured against (m).
    pub h: f64,
    /// Mean of `|B(y + eps n)|` and `|B(y - eps n)|` over all nodes (T).
    pub mean_field_norm: f64,
    pub force: ForceField,
}

/// Fields `B(y + eps n(y))` and `B(y - eps n(y))` of `j` at every node.
/// Only exact node collisions are rejected.
pub fn offset_fields(grid: &SurfaceGrid, j: &SurfaceCurrent, epsilon: f64) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!("offset must be positive, got {epsilon}")));
    }
    let pairs: Vec<(Vec3, Vec3)> = (0..grid.len())
        .into_par_iter()
        .map(|y| {
            let off = grid.normal[y] * epsilon;
            let eval = |p: Vec3| field_at(grid, j, &p).map_err(|node| Error::NodeCollision { point: y, node });
            Ok((eval(grid.points[y] + off)?, eval(grid.points[y] - off)?))
        })
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

/// Mean of `|B(y +- eps n)|` over all nodes and both sides (T).
pub fn mean_offset_field(grid: &SurfaceGrid, j: &SurfaceCurrent, epsilon: f64) -> Result<f64> {
    let (plus, minus) = offset_fields(grid, j, epsilon)?;
    let sum: f64 = plus.iter().chain(&minus).map(|b| b.norm()).sum();
    Ok(sum / (2 * grid.len()) as f64)
}

/// Semi-sum force `L_eps(j1, j2)(y) = j1(y) x [B(j2)(y + eps n) + B(j2)(y - eps n)] / 2`.
///
/// Offsets below `h / 4` are rejected: the semi-sum is meaningless there and
/// the offset points approach source nodes.
pub fn laplace_force_eps(grid: &SurfaceGrid, j1: &SurfaceCurrent, j2: &SurfaceCurrent, epsilon: f64) -> Result<EpsilonProbe> {
    check_inputs(grid, j1, j2)?;
    let h = grid_spacing(grid);
    if epsilon < 0.25 * h * (1.0 - 1e-12) {
        return Err(Error::InvalidInput(format!("offset {epsilon:.3e} m is below h/4 = {:.3e} m", 0.25 * h)));
    }
    let (plus, minus) = offset_fields(grid, j2, epsilon)?;
    let mean_field_norm = plus.iter().chain(&minus).map(|b| b.norm()).sum::<f64>() / (2 * grid.len()) as f64;
    let total = j1
        .j
        .iter()
        .zip(plus.iter().zip(&minus))
        .map(|(u, (bp, bm))| u.cross(&((bp + bm) * 0.5)))
        .collect();
    Ok(EpsilonProbe { epsilon, h, mean_field_norm, force: ForceField::from_total(grid, total) })
}

/// Richardson extrapolation of the semi-sum to zero offset, assuming a
/// leading error linear in `eps`: `2 L_eps - L_2eps`.
pub fn richardson_force(grid: &SurfaceGrid, j1: &SurfaceCurrent, j2: &SurfaceCurrent, epsilon: f64) -> Result<ForceField> {
    let fine = laplace_force_eps(grid, j1, j2, epsilon)?;
    let coarse = laplace_force_eps(grid, j1, j2, 2.0 * epsilon)?;
    Ok(ForceField::linear_combination(grid, 2.0, &fine.force, -1.0, &coarse.force))
}

/// One row of an offset-convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub h: f64,
    /// Mean of `|B(y +- eps n)|` (T); `None` when an offset point hit a node.
    pub mean_field_norm: Option<f64>,
    /// `|L_eps - L| / |L|` in the surface `L^2` norm; `None` below `h / 4`
    /// or on a node collision.
    pub relative_error: Option<f64>,
    /// Why a value is missing.
    pub note: Option<String>,
}

/// Mean offset field and semi-sum error against the closed form `reference`
/// for every offset in `epsilons`. Failures are recorded per row.
pub fn epsilon_study(grid: &SurfaceGrid, j: &SurfaceCurrent, reference: &ForceField, epsilons: &[f64]) -> Vec<ConvergenceRow> {
    let h = grid_spacing(grid);
    epsilons
        .iter()
        .map(|&epsilon| {
            let mut row = ConvergenceRow { epsilon, h, mean_field_norm: None, relative_error: None, note: None };
            match offset_fields(grid, j, epsilon) {
                Err(e) => row.note = Some(e.to_string()),
                Ok((plus, minus)) => {
                    row.mean_field_norm =
                        Some(plus.iter().chain(&minus).map(|b| b.norm()).sum::<f64>() / (2 * grid.len()) as f64);
                    if epsilon < 0.25 * h * (1.0 - 1e-12) {
                        row.note = Some("offset below h/4".into());
                    } else {
                        let total: Vec<Vec3> = j
                            .j
                            .iter()
                            .zip(plus.iter().zip(&minus))
                            .map(|(u, (bp, bm))| u.cross(&((bp + bm) * 0.5)))
                            .collect();
                        let approx = ForceField::from_total(grid, total);
                        row.relative_error = Some(approx.relative_l2_difference(reference, grid));
                    }
                }
            }
            row
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Sensitivities of the self-force `L(j(c), j(c))` to the potential coefficients.
#[derive(Clone, Debug)]
pub struct ForceJacobian {
    pub quadrature: SingularQuadrature,
    pub jacobian: CurrentJacobian,
    pub current: SurfaceCurrent,
    /// Mean field of `current` at every node.
    pub mean_field: Vec<Vec3>,
}

/// Linearize the self-force around `pot`.
pub fn force_jacobian(grid: &SurfaceGrid, pot: &CurrentPotential) -> Result<ForceJacobian> {
    force_jacobian_with(grid, pot, SingularQuadrature::default())
}

pub fn force_jacobian_with(grid: &SurfaceGrid, pot: &CurrentPotential, quad: SingularQuadrature) -> Result<ForceJacobian> {
    let jacobian = current_jacobian(grid, pot)?;
    let current = current_from_potential(grid, pot)?;
    let mean_field = mean_field_with(grid, &current, quad);
    Ok(ForceJacobian { quadrature: quad, jacobian, current, mean_field })
}

impl ForceJacobian {
    /// Self-force at the linearization point.
    pub fn force(&self, grid: &SurfaceGrid) -> ForceField {
        let total = self.current.j.iter().zip(&self.mean_field).map(|(u, b)| u.cross(b)).collect();
        ForceField::from_total(grid, total)
    }

    /// `L(dj, j) + L(j, dj)` for the coefficient direction `dir`.
    pub fn directional(&self, grid: &SurfaceGrid, dir: &[f64]) -> Vec<Vec3> {
        let dj = self.jacobian.apply_linear(dir);
        let bm_d = mean_field_with(grid, &dj, self.quadrature);
        dj.j.iter()
            .zip(&self.mean_field)
            .zip(self.current.j.iter().zip(&bm_d))
            .map(|((du, b), (u, db))| du.cross(b) + u.cross(db))
            .collect()
    }

    /// Gradient of a scalar `C(L)` given `dC/dL(y)` at every node.
    pub fn pullback(&self, grid: &SurfaceGrid, d_force: &[Vec3]) -> Vec<f64> {
        let (s_j, s_t, s_z) = force_adjoint(grid, &self.current, &self.mean_field, d_force, self.quadrature);
        self.jacobian.pullback(&s_j, &s_t, &s_z)
    }
}

/// Adjoint of `j -> j x Bm(j)`: cotangents on `(j, d_theta j, d_zeta j)`.
pub fn force_adjoint(
    grid: &SurfaceGrid,
    current: &SurfaceCurrent,
    mean_field: &[Vec3],
    d_force: &[Vec3],
    quad: SingularQuadrature,
) -> (Vec<Vec3>, Vec<Vec3>, Vec<Vec3>) {
    let selfw = self_weights(grid, quad);
    let beta: Vec<Vec3> = d_force.iter().zip(&current.j).map(|(g, u)| g.cross(u)).collect();
    let cell = grid.d_theta() * grid.d_zeta();
    let per_source: Vec<(Vec3, Vec3, Vec3)> = (0..grid.len())
        .into_par_iter()
        .map(|x| {
            let (px, nx, h2) = (grid.points[x], grid.normal[x], grid.mean_curvature_sum[x]);
            let (mut pc, mut qd) = (Vec3::zeros(), Vec3::zeros());
            for y in 0..grid.len() {
                if x == y {
                    continue;
                }
                let r = grid.points[y] - px;
                let inv_d = 1.0 / r.norm();
                let c = h2 * inv_d + r.dot(&nx) * inv_d * inv_d * inv_d;
                pc += beta[y] * c;
                qd += beta[y] * inv_d;
            }
            if let Some(sw) = selfw {
                pc += beta[x] * ((h2 * sw[x][0] + sw[x][1]) / cell);
                qd += beta[x] * (sw[x][0] / cell);
            }
            let w = MU0_OVER_4PI * grid.area_element[x] * cell;
            let s_j = mean_field[x].cross(&d_force[x]) + nx.cross(&pc) * w;
            (s_j, qd.cross(&grid.dual_theta[x]) * w, qd.cross(&grid.dual_zeta[x]) * w)
        })
        .collect();
    let mut s_j = Vec::with_capacity(grid.len());
    let mut s_t = Vec::with_capacity(grid.len());
    let mut s_z = Vec::with_capacity(grid.len());
    for (a, b, c) in per_source {
        s_j.push(a);
        s_t.push(b);
        s_z.push(c);
    }
    (s_j, s_t, s_z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FourierSurface;
    use crate::MU_0;
    use std::f64::consts::PI;

    fn torus(n: usize) -> SurfaceGrid {
        SurfaceGrid::new(&FourierSurface::circular_torus(1.0, 0.3), n, n).unwrap()
    }

    fn solenoid(grid: &SurfaceGrid, g: f64) -> SurfaceCurrent {
        current_from_potential(grid, &CurrentPotential::zeros(0, g, 0.0)).unwrap()
    }

    fn mixed_potential(seed: f64) -> CurrentPotential {
        let mut pot = CurrentPotential::zeros(2, 8.0e5, 1.5e5);
        let c: Vec<f64> = (0..pot.dof()).map(|i| 3e4 * ((i as f64 + 1.0) * seed).sin()).collect();
        pot.set_coefficients(&c);
        pot
    }

    #[test]
    fn zero_second_current_gives_zero_force() {
        let g = torus(12);
        let j1 = current_from_potential(&g, &mixed_potential(0.3)).unwrap();
        let f = laplace_force(&g, &j1, &SurfaceCurrent::zeros(g.len())).unwrap();
        assert!(f.total.iter().all(|v| *v == Vec3::zeros()));
    }

    #[test]
    fn terms_sum_to_factored_form_and_are_finite() {
        let g = torus(12);
        let j1 = current_from_potential(&g, &mixed_potential(0.3)).unwrap();
        let j2 = current_from_potential(&g, &mixed_potential(0.7)).unwrap();
        let f = laplace_force(&g, &j1, &j2).unwrap();
        let terms = laplace_force_terms(&g, &j1, &j2).unwrap();
        let scale = f.max_magnitude();
        for y in 0..g.len() {
            let sum = terms[0][y] + terms[1][y] + terms[2][y] + terms[3][y];
            assert!((sum - f.total[y]).norm() < 1e-11 * scale);
            assert!(terms.iter().all(|t| t[y].iter().all(|c| c.is_finite())));
        }
    }

    #[test]
    fn mismatched_grid_rejected() {
        let g = torus(8);
        let j = SurfaceCurrent::zeros(10);
        assert!(matches!(laplace_force(&g, &j, &j), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn solenoid_pressure_is_outward_and_normal() {
        let g = torus(48);
        let big_g = 1.0e6;
        let j = solenoid(&g, big_g);
        let f = laplace_force(&g, &j, &j).unwrap();
        for y in 0..g.len() {
            let rho = (g.points[y].x.powi(2) + g.points[y].y.powi(2)).sqrt();
            let expected = MU_0 * big_g * big_g / (8.0 * PI * PI * rho * rho);
            assert!(f.normal_component[y] > 0.0);
            assert!((f.normal_component[y] - expected).abs() < 0.06 * expected, "{} vs {expected}", f.normal_component[y]);
            assert!(f.tangential_component[y].norm() < 0.05 * f.normal_component[y]);
        }
    }

    #[test]
    fn offset_below_quarter_spacing_rejected() {
        let g = torus(16);
        let j = solenoid(&g, 1e5);
        let h = grid_spacing(&g);
        assert!(laplace_force_eps(&g, &j, &j, 0.2 * h).is_err());
        assert!(laplace_force_eps(&g, &j, &j, 0.25 * h).is_ok());
        assert!(offset_fields(&g, &j, 0.0).is_err());
    }

    #[test]
    fn directional_derivative_matches_bilinear_expansion() {
        let g = torus(10);
        let pot = CurrentPotential::zeros(2, 6.0e5, 1.0e5);
        let fj = force_jacobian(&g, &pot).unwrap();
        let k = 3;
        let mut e = vec![0.0; pot.dof()];
        e[k] = 1.0;
        let dir = fj.directional(&g, &e);
        let col = &fj.jacobian.columns[k];
        let a = laplace_force(&g, col, &fj.current).unwrap();
        let b = laplace_force(&g, &fj.current, col).unwrap();
        for y in 0..g.len() {
            let expected = a.total[y] + b.total[y];
            assert!((dir[y] - expected).norm() <= 1e-12 * expected.norm().max(1e-30));
        }
    }

    #[test]
    fn adjoint_matches_directional_derivative() {
        let g = torus(10);
        let pot = mixed_potential(0.45);
        let fj = force_jacobian(&g, &pot).unwrap();
        let weights: Vec<Vec3> = (0..g.len())
            .map(|i| Vec3::new((0.3 * i as f64).sin(), (0.7 * i as f64).cos(), (1.1 * i as f64).sin()))
            .collect();
        let grad = fj.pullback(&g, &weights);
        let dir: Vec<f64> = (0..pot.dof()).map(|i| (2.3 * i as f64).cos()).collect();
        let dl = fj.directional(&g, &dir);
        let lhs: f64 = dl.iter().zip(&weights).map(|(a, b)| a.dot(b)).sum();
        let rhs: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs(), "{lhs} vs {rhs}");
    }
}
