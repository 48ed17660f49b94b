//! Scalar objectives and the composite cost
//! `chi2 = chi2_B + lambda1 chi2_j + lambda2 chi2_gradj + gamma chi2_F`.

use nalgebra::{DMatrix, DVector, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::currents::{current_jacobian, CurrentJacobian, CurrentPotential, SurfaceCurrent};
use crate::force::{force_adjoint, force_jacobian_with, mean_field_with, ForceField, SingularQuadrature};
use crate::geometry::SurfaceGrid;
use crate::magnetics::{NormalFieldOperator, PlasmaBoundary};
use crate::{Error, Result, Vec3};

/// Regularization of `|L|` inside gradients (Pa).
pub const FORCE_ETA: f64 = 1.0;

/// How the force enters `chi2_F`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ForceMetric {
    /// `int |L|^2 dS`.
    L2,
    /// `(int |L|^p dS)^(2/p)`.
    Lp { p: u32 },
    /// `int f_e(|L|) dS`.
    Ce,
}

/// Penalty weights and force thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    /// Weight of `chi2_j` (T^2 m^2 / A^2).
    pub lambda1: f64,
    /// Weight of `chi2_gradj` (T^2 m^4 / A^2).
    pub lambda2: f64,
    /// Weight of `chi2_F` (T^2 / Pa^2).
    pub gamma: f64,
    pub force_metric: ForceMetric,
    /// Stress below which the barrier cost vanishes (Pa).
    pub c0: f64,
    /// Rupture stress (Pa).
    pub c1: f64,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        Self { lambda1: 0.0, lambda2: 0.0, gamma: 0.0, force_metric: ForceMetric::L2, c0: 5.0e6, c1: 1.0e7 }
    }
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("gamma", self.gamma)] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        if !(self.c0 > 0.0 && self.c0 < self.c1 && self.c1.is_finite()) {
            return Err(Error::InvalidInput(format!("need 0 < c0 < c1, got c0={} c1={}", self.c0, self.c1)));
        }
        if let ForceMetric::Lp { p } = self.force_metric {
            if p == 0 {
                return Err(Error::InvalidInput("L^p force metric needs p >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Every term of the composite cost plus diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub chi2_b: f64,
    pub chi2_j: f64,
    pub chi2_gradj: f64,
    pub chi2_f: f64,
    pub total: f64,
    /// `max |L|` over the winding grid (Pa).
    pub max_force: f64,
    /// `sqrt(int |L|^2 dS / area)` (Pa).
    pub rms_force: f64,
    /// `max |B.n + b_target|` over the plasma grid (T).
    pub max_normal_field_error: f64,
    /// `sqrt(chi2_B / area_P)` (T).
    pub rms_normal_field_error: f64,
    /// `sqrt(chi2_j / area)` (A/m).
    pub rms_current: f64,
    /// Some node reached the rupture stress under the barrier metric.
    pub ruptured: bool,
}

/// `int |j|^2 dS` (A^2).
pub fn chi_j(grid: &SurfaceGrid, current: &SurfaceCurrent) -> f64 {
    let sq: Vec<f64> = current.j.iter().map(|v| v.norm_squared()).collect();
    grid.integrate(&sq)
}

/// Squared Frobenius norm of the tangential gradient of `j` at node `i`.
fn grad_norm_sq(grid: &SurfaceGrid, current: &SurfaceCurrent, i: usize) -> f64 {
    let (gtt, gtz, gzz) = grid.inverse_metric(i);
    let (a, b) = (current.d_theta_j[i], current.d_zeta_j[i]);
    gtt * a.norm_squared() + 2.0 * gtz * a.dot(&b) + gzz * b.norm_squared()
}

/// `int sum_i |grad_S j_i|^2 dS` over the ambient components of `j` (A^2).
pub fn chi_grad_j(grid: &SurfaceGrid, current: &SurfaceCurrent) -> f64 {
    let sq: Vec<f64> = (0..grid.len()).map(|i| grad_norm_sq(grid, current, i)).collect();
    grid.integrate(&sq)
}

/// `(int |L|^p dS)^(1/p)` (Pa m^(2/p)).
pub fn lp_force_cost(force: &ForceField, grid: &SurfaceGrid, p: u32) -> f64 {
    let vals: Vec<f64> = force.total.iter().map(|f| f.norm().powi(p as i32)).collect();
    grid.integrate(&vals).powf(1.0 / p as f64)
}

/// Barrier-type local cost; `(inf, true)` at or above `c1`.
pub fn f_e(w: f64, c0: f64, c1: f64) -> (f64, bool) {
    if w >= c1 {
        return (f64::INFINITY, true);
    }
    let s = (w - c0).max(0.0);
    (s * s / (1.0 - s / (c1 - c0)), false)
}

/// `d f_e / dw` below `c1`.
pub fn f_e_derivative(w: f64, c0: f64, c1: f64) -> f64 {
    let s = (w - c0).max(0.0);
    let t = s / (c1 - c0);
    s * (2.0 - t) / ((1.0 - t) * (1.0 - t))
}

/// `int f_e(|L|) dS`, flagged when any node reaches `c1`.
pub fn ce_cost(force: &ForceField, grid: &SurfaceGrid, c0: f64, c1: f64) -> (f64, bool) {
    let mut ruptured = false;
    let vals: Vec<f64> = force
        .total
        .iter()
        .map(|f| {
            let (v, r) = f_e(f.norm(), c0, c1);
            ruptured |= r;
            v
        })
        .collect();
    if ruptured {
        (f64::INFINITY, true)
    } else {
        (grid.integrate(&vals), false)
    }
}

/// `chi2_F` under `metric` with its derivative with respect to `L` at every
/// node (when requested and finite).
fn force_term(
    force: &[Vec3],
    grid: &SurfaceGrid,
    spec: &ObjectiveSpec,
    want_grad: bool,
) -> (f64, bool, Option<Vec<Vec3>>) {
    let w = grid.weights();
    let unit = |f: &Vec3| f / (f.norm_squared() + FORCE_ETA * FORCE_ETA).sqrt();
    match spec.force_metric {
        ForceMetric::L2 => {
            let value = force.iter().zip(&w).map(|(f, w)| w * f.norm_squared()).sum();
            let grad = want_grad.then(|| force.iter().zip(&w).map(|(f, w)| f * (2.0 * w)).collect());
            (value, false, grad)
        }
        ForceMetric::Lp { p } => {
            let pf = p as f64;
            let integral: f64 = force.iter().zip(&w).map(|(f, w)| w * f.norm().powf(pf)).sum();
            let value = integral.powf(2.0 / pf);
            let grad = want_grad.then(|| {
                if integral == 0.0 {
                    return vec![Vec3::zeros(); force.len()];
                }
                let outer = 2.0 * integral.powf(2.0 / pf - 1.0);
                force.iter().zip(&w).map(|(f, w)| unit(f) * (outer * w * f.norm().powf(pf - 1.0))).collect()
            });
            (value, false, grad)
        }
        ForceMetric::Ce => {
            let mut value = 0.0;
            let mut ruptured = false;
            for (f, w) in force.iter().zip(&w) {
                let (v, r) = f_e(f.norm(), spec.c0, spec.c1);
                ruptured |= r;
                value += w * v;
            }
            if ruptured {
                return (f64::INFINITY, true, None);
            }
            let grad = want_grad.then(|| {
                force
                    .iter()
                    .zip(&w)
                    .map(|(f, w)| unit(f) * (w * f_e_derivative(f.norm(), spec.c0, spec.c1)))
                    .collect()
            });
            (value, false, grad)
        }
    }
}

/// Composite objective on a fixed winding grid, plasma boundary and basis,
/// evaluated as a function of the potential coefficients.
#[derive(Clone, Debug)]
pub struct Objective {
    pub grid: SurfaceGrid,
    pub boundary: PlasmaBoundary,
    pub template: CurrentPotential,
    pub spec: ObjectiveSpec,
    pub quadrature: SingularQuadrature,
    pub jacobian: CurrentJacobian,
    pub normal_field: NormalFieldOperator,
}

/// Cost and, when available, its coefficient gradient.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub breakdown: CostBreakdown,
    pub gradient: Option<Vec<f64>>,
    /// Force field at the evaluated point.
    pub force: ForceField,
}

impl Objective {
    pub fn new(grid: SurfaceGrid, boundary: PlasmaBoundary, template: &CurrentPotential, spec: ObjectiveSpec) -> Result<Self> {
        spec.validate()?;
        let jacobian = current_jacobian(&grid, template)?;
        let normal_field = NormalFieldOperator::new(&grid, &jacobian, &boundary)?;
        Ok(Self {
            grid,
            boundary,
            template: template.clone(),
            spec,
            quadrature: SingularQuadrature::default(),
            jacobian,
            normal_field,
        })
    }

    /// Same surfaces and basis, different weights.
    pub fn with_spec(&self, spec: ObjectiveSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, ..self.clone() })
    }

    pub fn dof(&self) -> usize {
        self.jacobian.dof()
    }

    pub fn potential(&self, coeffs: &[f64]) -> CurrentPotential {
        self.template.with_coefficients(coeffs)
    }

    pub fn current(&self, coeffs: &[f64]) -> SurfaceCurrent {
        self.jacobian.apply(coeffs)
    }

    fn check_len(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.dof() {
            return Err(Error::InvalidInput(format!("expected {} coefficients, got {}", self.dof(), coeffs.len())));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numerical("non-finite coefficient".into()));
        }
        Ok(())
    }

    pub fn cost(&self, coeffs: &[f64]) -> Result<Evaluation> {
        self.evaluate(coeffs, false)
    }

    pub fn cost_and_gradient(&self, coeffs: &[f64]) -> Result<Evaluation> {
        self.evaluate(coeffs, true)
    }

    fn evaluate(&self, coeffs: &[f64], want_grad: bool) -> Result<Evaluation> {
        self.check_len(coeffs)?;
        let grid = &self.grid;
        let spec = &self.spec;
        let current = self.current(coeffs);

        let residual = self.normal_field.residual(coeffs);
        let chi2_b: f64 = residual.iter().zip(self.normal_field.weights.iter()).map(|(r, w)| w * r * r).sum();
        let chi2_j = chi_j(grid, &current);
        let chi2_gradj = chi_grad_j(grid, &current);

        let bm = mean_field_with(grid, &current, self.quadrature);
        let total_force: Vec<Vec3> = current.j.iter().zip(&bm).map(|(u, b)| u.cross(b)).collect();
        let use_force = spec.gamma > 0.0;
        let (chi2_f, ruptured, d_force) = force_term(&total_force, grid, spec, want_grad && use_force);
        let force = ForceField::from_total(grid, total_force);

        let total = chi2_b
            + spec.lambda1 * chi2_j
            + spec.lambda2 * chi2_gradj
            + if use_force { spec.gamma * chi2_f } else { 0.0 };
        let breakdown = CostBreakdown {
            chi2_b,
            chi2_j,
            chi2_gradj,
            chi2_f,
            total,
            max_force: force.max_magnitude(),
            rms_force: (force.l2_norm(grid).powi(2) / grid.area()).sqrt(),
            max_normal_field_error: residual.iter().fold(0.0f64, |m, r| m.max(r.abs())),
            rms_normal_field_error: (chi2_b / self.boundary.grid.area()).sqrt(),
            rms_current: (chi2_j / grid.area()).sqrt(),
            ruptured: ruptured && use_force,
        };
        if !want_grad || (use_force && ruptured) {
            return Ok(Evaluation { breakdown, gradient: None, force });
        }

        let weights = grid.weights();
        let n = grid.len();
        let (mut s_j, mut s_t, mut s_z) = (vec![Vec3::zeros(); n], vec![Vec3::zeros(); n], vec![Vec3::zeros(); n]);
        if spec.lambda1 > 0.0 {
            for i in 0..n {
                s_j[i] += current.j[i] * (2.0 * spec.lambda1 * weights[i]);
            }
        }
        if spec.lambda2 > 0.0 {
            for i in 0..n {
                let (gtt, gtz, gzz) = grid.inverse_metric(i);
                let (a, b) = (current.d_theta_j[i], current.d_zeta_j[i]);
                let k = 2.0 * spec.lambda2 * weights[i];
                s_t[i] += (a * gtt + b * gtz) * k;
                s_z[i] += (a * gtz + b * gzz) * k;
            }
        }
        if let Some(d_force) = d_force {
            let scaled: Vec<Vec3> = d_force.iter().map(|g| g * spec.gamma).collect();
            let (fj, ft, fz) = force_adjoint(grid, &current, &bm, &scaled, self.quadrature);
            s_j.par_iter_mut().zip(&fj).for_each(|(a, b)| *a += b);
            s_t.par_iter_mut().zip(&ft).for_each(|(a, b)| *a += b);
            s_z.par_iter_mut().zip(&fz).for_each(|(a, b)| *a += b);
        }
        let mut gradient = self.jacobian.pullback(&s_j, &s_t, &s_z);
        for (g, b) in gradient.iter_mut().zip(self.normal_field.gradient(coeffs)) {
            *g += b;
        }
        Ok(Evaluation { breakdown, gradient: Some(gradient), force })
    }

    /// Feasibility penalty `int max(|L| - c1 + delta, 0)^2 dS` with
    /// `delta = 0.05 (c1 - c0)`, and its gradient.
    pub fn restoration(&self, coeffs: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
        self.check_len(coeffs)?;
        let grid = &self.grid;
        let current = self.current(coeffs);
        let bm = mean_field_with(grid, &current, self.quadrature);
        let force: Vec<Vec3> = current.j.iter().zip(&bm).map(|(u, b)| u.cross(b)).collect();
        let level = self.spec.c1 - 0.05 * (self.spec.c1 - self.spec.c0);
        let weights = grid.weights();
        let mut value = 0.0;
        let d_force: Vec<Vec3> = force
            .iter()
            .zip(&weights)
            .map(|(f, w)| {
                let excess = (f.norm() - level).max(0.0);
                value += w * excess * excess;
                f / (f.norm_squared() + FORCE_ETA * FORCE_ETA).sqrt() * (2.0 * w * excess)
            })
            .collect();
        let max_force = force.iter().map(|f| f.norm()).fold(0.0, f64::max);
        let (s_j, s_t, s_z) = force_adjoint(grid, &current, &bm, &d_force, self.quadrature);
        Ok((value, self.jacobian.pullback(&s_j, &s_t, &s_z), max_force))
    }

    /// Diagonal of the quadratic part's Hessian
    /// `2 (A^T W A + lambda1 M_j + lambda2 M_gradj)`.
    pub fn quadratic_diagonal(&self) -> Vec<f64> {
        let grid = &self.grid;
        let weights = grid.weights();
        let a = &self.normal_field.matrix;
        let wp = &self.normal_field.weights;
        (0..self.dof())
            .into_par_iter()
            .map(|k| {
                let col = &self.jacobian.columns[k];
                let b: f64 = (0..a.nrows()).map(|i| wp[i] * a[(i, k)] * a[(i, k)]).sum();
                let j: f64 = (0..grid.len()).map(|i| weights[i] * col.j[i].norm_squared()).sum();
                let gj: f64 = (0..grid.len()).map(|i| weights[i] * grad_norm_sq(grid, col, i)).sum();
                2.0 * (b + self.spec.lambda1 * j + self.spec.lambda2 * gj)
            })
            .collect()
    }

    /// Hessian of the quadratic part,
    /// `2 (A^T W A + lambda1 M_j + lambda2 M_gradj)`, and its gradient at zero.
    pub fn quadratic_hessian(&self) -> (DMatrix<f64>, DVector<f64>) {
        let dof = self.dof();
        let grid = &self.grid;
        let weights = grid.weights();
        let mut h = self.normal_field.hessian();
        let mut g0 = DVector::from_vec(self.normal_field.gradient(&vec![0.0; dof]));
        let (l1, l2) = (self.spec.lambda1, self.spec.lambda2);
        if l1 == 0.0 && l2 == 0.0 {
            return (h, g0);
        }
        let cols = &self.jacobian.columns;
        let sec = &self.jacobian.secular;
        let inner = |a: &SurfaceCurrent, b: &SurfaceCurrent| -> f64 {
            let mut j = 0.0;
            let mut g = 0.0;
            for i in 0..grid.len() {
                let (gtt, gtz, gzz) = grid.inverse_metric(i);
                j += weights[i] * a.j[i].dot(&b.j[i]);
                g += weights[i]
                    * (gtt * a.d_theta_j[i].dot(&b.d_theta_j[i])
                        + gtz * (a.d_theta_j[i].dot(&b.d_zeta_j[i]) + a.d_zeta_j[i].dot(&b.d_theta_j[i]))
                        + gzz * a.d_zeta_j[i].dot(&b.d_zeta_j[i]));
            }
            2.0 * (l1 * j + l2 * g)
        };
        let upper: Vec<Vec<f64>> =
            (0..dof).into_par_iter().map(|k| (k..dof).map(|m| inner(&cols[k], &cols[m])).collect()).collect();
        for (k, row) in upper.iter().enumerate() {
            for (off, v) in row.iter().enumerate() {
                let m = k + off;
                h[(k, m)] += v;
                if m != k {
                    h[(m, k)] += v;
                }
            }
            g0[k] += inner(&cols[k], sec);
        }
        (h, g0)
    }

    /// Minimizer of the quadratic part (`gamma` ignored) by a direct dense
    /// solve of the normal equations.
    pub fn solve_quadratic(&self) -> Result<Vec<f64>> {
        let (h, g0) = self.quadratic_hessian();
        let chol = h.cholesky().ok_or_else(|| Error::Numerical("quadratic Hessian is not positive definite".into()))?;
        Ok(chol.solve(&(-g0)).as_slice().to_vec())
    }

    /// Gauss-Newton curvature of `gamma chi2_F` at `coeffs`, built from the
    /// exact force Jacobian (zero when `gamma = 0`).
    pub fn force_curvature(&self, coeffs: &[f64]) -> Result<DMatrix<f64>> {
        let dof = self.dof();
        let mut out = DMatrix::zeros(dof, dof);
        if self.spec.gamma == 0.0 {
            return Ok(out);
        }
        let grid = &self.grid;
        let fj = force_jacobian_with(grid, &self.potential(coeffs), self.quadrature)?;
        let force = fj.force(grid);
        let weights = grid.weights();
        let spec = &self.spec;
        let lp_outer = match spec.force_metric {
            ForceMetric::Lp { p } => {
                let pf = p as f64;
                let integral: f64 = force.total.iter().zip(&weights).map(|(f, w)| w * f.norm().powf(pf)).sum();
                if integral > 0.0 { 2.0 * integral.powf(2.0 / pf - 1.0) } else { 0.0 }
            }
            _ => 0.0,
        };
        // 3x3 weight of each node: d2 cost / dL2 (positive semidefinite part)
        let node_weight: Vec<Matrix3<f64>> = force
            .total
            .iter()
            .zip(&weights)
            .map(|(f, w)| {
                let mag = (f.norm_squared() + FORCE_ETA * FORCE_ETA).sqrt();
                let radial = (f / mag) * (f / mag).transpose();
                let m = match spec.force_metric {
                    ForceMetric::L2 => Matrix3::identity() * 2.0,
                    ForceMetric::Lp { p } => {
                        let pf = p as f64;
                        Matrix3::identity() * (lp_outer * (pf - 1.0).max(1.0) * mag.powf(pf - 2.0))
                    }
                    ForceMetric::Ce => {
                        let s = (f.norm() - spec.c0).max(0.0);
                        if s == 0.0 {
                            Matrix3::zeros()
                        } else {
                            let t = (s / (spec.c1 - spec.c0)).min(0.999);
                            radial * (2.0 / (1.0 - t).powi(3))
                                + (Matrix3::identity() - radial) * (f_e_derivative(f.norm(), spec.c0, spec.c1) / mag)
                        }
                    }
                };
                m * (w * spec.gamma)
            })
            .collect();
        let columns: Vec<Vec<Vec3>> = (0..dof)
            .map(|k| {
                let mut e = vec![0.0; dof];
                e[k] = 1.0;
                fj.directional(grid, &e)
            })
            .collect();
        let entries: Vec<Vec<f64>> = (0..dof)
            .into_par_iter()
            .map(|k| {
                (k..dof)
                    .map(|m| (0..grid.len()).map(|y| columns[k][y].dot(&(node_weight[y] * columns[m][y]))).sum())
                    .collect()
            })
            .collect();
        for (k, row) in entries.iter().enumerate() {
            for (off, v) in row.iter().enumerate() {
                out[(k, k + off)] = *v;
                out[(k + off, k)] = *v;
            }
        }
        Ok(out)
    }
}

/// Breakdown and gradient of the composite cost for one potential.
pub fn total_cost_and_gradient(
    grid: &SurfaceGrid,
    pot: &CurrentPotential,
    boundary: &PlasmaBoundary,
    spec: &ObjectiveSpec,
) -> Result<(CostBreakdown, Option<Vec<f64>>)> {
    let obj = Objective::new(grid.clone(), boundary.clone(), pot, *spec)?;
    let eval = obj.cost_and_gradient(&pot.coefficients())?;
    Ok((eval.breakdown, eval.gradient))
}
