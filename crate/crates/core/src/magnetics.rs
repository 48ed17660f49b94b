//! Biot-Savart field of a sheet current and the normal-field objective.
//!
//! `B(y) = mu0/4pi sum_x j(x) x (y - x) / |y - x|^3 dS(x)` with trapezoidal
//! weights on the periodic grid. Reductions over sources run in grid order
//! for every target, so results do not depend on the thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::currents::{CurrentJacobian, CurrentPotential, SurfaceCurrent};
use crate::geometry::SurfaceGrid;
use crate::{Error, Result, Vec3, MU0_OVER_4PI};

/// Plasma boundary with an optional prescribed normal field to cancel.
#[derive(Clone, Debug)]
pub struct PlasmaBoundary {
    pub grid: SurfaceGrid,
    /// Normal field (T) from sources other than the sheet, one value per node.
    pub b_target_normal: Option<Vec<f64>>,
}

impl PlasmaBoundary {
    pub fn new(grid: SurfaceGrid) -> Self {
        Self { grid, b_target_normal: None }
    }

    pub fn with_target(grid: SurfaceGrid, target: Vec<f64>) -> Result<Self> {
        if target.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "target field has {} values, plasma grid has {} nodes",
                target.len(),
                grid.len()
            )));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite target normal field".into()));
        }
        Ok(Self { grid, b_target_normal: Some(target) })
    }

    pub fn target(&self, idx: usize) -> f64 {
        self.b_target_normal.as_ref().map_or(0.0, |t| t[idx])
    }

    /// Parse a grid-shaped CSV: `n_theta` rows of `n_zeta` values (T).
    /// Blank lines and `#` comments are ignored.
    pub fn parse_target_csv(text: &str, n_theta: usize, n_zeta: usize) -> Result<Vec<f64>> {
        let mut values = Vec::with_capacity(n_theta * n_zeta);
        let mut rows = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse { line: idx + 1, msg: format!("invalid number `{}`", s.trim()) })
                })
                .collect::<Result<_>>()?;
            if row.len() != n_zeta {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected {n_zeta} columns, found {}", row.len()),
                });
            }
            values.extend(row);
            rows += 1;
        }
        if rows != n_theta {
            return Err(Error::Parse { line: 0, msg: format!("expected {n_theta} rows, found {rows}") });
        }
        Ok(values)
    }
}

/// Field evaluated at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub point: Vec3,
    pub b: Vec3,
}

fn collision_tolerance(grid: &SurfaceGrid) -> f64 {
    1e-12 * grid.points.iter().map(|p| p.norm()).fold(1.0, f64::max)
}

/// Field of `current` at a single off-surface point.
pub fn field_at(grid: &SurfaceGrid, current: &SurfaceCurrent, y: &Vec3) -> std::result::Result<Vec3, usize> {
    let tol = collision_tolerance(grid);
    let weights_cell = grid.d_theta() * grid.d_zeta();
    let mut b = Vec3::zeros();
    for (ix, x) in grid.points.iter().enumerate() {
        let r = y - x;
        let d = r.norm();
        if d <= tol {
            return Err(ix);
        }
        let w = grid.area_element[ix] * weights_cell;
        b += current.j[ix].cross(&r) * (w / (d * d * d));
    }
    Ok(b * MU0_OVER_4PI)
}

/// Biot-Savart field of a sheet current at arbitrary off-surface points.
pub fn biot_savart(grid: &SurfaceGrid, current: &SurfaceCurrent, points: &[Vec3]) -> Result<Vec<FieldSample>> {
    if current.len() != grid.len() {
        return Err(Error::GridMismatch("current and winding grid differ in size".into()));
    }
    points
        .par_iter()
        .enumerate()
        .map(|(ip, y)| {
            field_at(grid, current, y)
                .map(|b| FieldSample { point: *y, b })
                .map_err(|node| Error::NodeCollision { point: ip, node })
        })
        .collect()
}

/// Minimum node distance between the two surfaces; errors if any plasma node
/// lies on or outside the winding surface.
pub fn check_disjoint(winding: &SurfaceGrid, plasma: &SurfaceGrid) -> Result<f64> {
    let tol = collision_tolerance(winding);
    let worst = plasma
        .points
        .par_iter()
        .map(|p| {
            let (mut best, mut best_ix) = (f64::INFINITY, 0);
            for (ix, x) in winding.points.iter().enumerate() {
                let d = (p - x).norm_squared();
                if d < best {
                    best = d;
                    best_ix = ix;
                }
            }
            let outside = (p - winding.points[best_ix]).dot(&winding.normal[best_ix]) > 0.0;
            (best.sqrt(), outside)
        })
        .reduce(|| (f64::INFINITY, false), |a, b| (a.0.min(b.0), a.1 || b.1));
    if worst.0 <= tol || worst.1 {
        return Err(Error::SurfacesIntersect { distance: worst.0 });
    }
    Ok(worst.0)
}

/// Normal field `B . n` of the sheet on the plasma nodes (T).
pub fn normal_field(grid: &SurfaceGrid, current: &SurfaceCurrent, boundary: &PlasmaBoundary) -> Result<Vec<f64>> {
    let samples = biot_savart(grid, current, &boundary.grid.points)?;
    Ok(samples.iter().zip(&boundary.grid.normal).map(|(s, n)| s.b.dot(n)).collect())
}

/// `chi2_B = int_{S_P} (B . n + b_target)^2 dS` (T^2 m^2).
pub fn chi_b(grid: &SurfaceGrid, current: &SurfaceCurrent, boundary: &PlasmaBoundary) -> Result<f64> {
    check_disjoint(grid, &boundary.grid)?;
    let bn = normal_field(grid, current, boundary)?;
    let residual: Vec<f64> = bn.iter().enumerate().map(|(i, b)| (b + boundary.target(i)).powi(2)).collect();
    Ok(boundary.grid.integrate(&residual))
}

/// Affine map from potential coefficients to the plasma normal field:
/// `B.n + b_target = matrix c + offset`.
#[derive(Clone, Debug)]
pub struct NormalFieldOperator {
    pub matrix: DMatrix<f64>,
    /// Secular (`G`, `I`) field plus the target.
    pub offset: DVector<f64>,
    /// Plasma quadrature weights.
    pub weights: DVector<f64>,
}

impl NormalFieldOperator {
    pub fn new(winding: &SurfaceGrid, jacobian: &CurrentJacobian, boundary: &PlasmaBoundary) -> Result<Self> {
        check_disjoint(winding, &boundary.grid)?;
        let plasma = &boundary.grid;
        let dof = jacobian.dof();
        let cell = winding.d_theta() * winding.d_zeta();
        let rows: Vec<(Vec<f64>, f64)> = (0..plasma.len())
            .into_par_iter()
            .map(|ip| {
                let (p, np) = (plasma.points[ip], plasma.normal[ip]);
                // B.n = sum_x j(x) . kernel(x)
                let kernel: Vec<Vec3> = winding
                    .points
                    .iter()
                    .zip(&winding.area_element)
                    .map(|(x, a)| {
                        let r = p - x;
                        let d = r.norm();
                        r.cross(&np) * (MU0_OVER_4PI * a * cell / (d * d * d))
                    })
                    .collect();
                let dot = |cur: &SurfaceCurrent| -> f64 { cur.j.iter().zip(&kernel).map(|(j, k)| j.dot(k)).sum() };
                let row = jacobian.columns.iter().map(dot).collect();
                (row, dot(&jacobian.secular) + boundary.target(ip))
            })
            .collect();
        let mut matrix = DMatrix::zeros(plasma.len(), dof);
        let mut offset = DVector::zeros(plasma.len());
        for (ip, (row, off)) in rows.into_iter().enumerate() {
            for (k, v) in row.into_iter().enumerate() {
                matrix[(ip, k)] = v;
            }
            offset[ip] = off;
        }
        Ok(Self { matrix, offset, weights: DVector::from_vec(plasma.weights()) })
    }

    /// Residual `B.n + b_target` at every plasma node.
    pub fn residual(&self, coeffs: &[f64]) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(coeffs) + &self.offset
    }

    pub fn chi_b(&self, coeffs: &[f64]) -> f64 {
        let r = self.residual(coeffs);
        r.iter().zip(self.weights.iter()).map(|(v, w)| w * v * v).sum()
    }

    /// Exact gradient `2 A^T W (A c + b)`.
    pub fn gradient(&self, coeffs: &[f64]) -> Vec<f64> {
        let r = self.residual(coeffs).component_mul(&self.weights) * 2.0;
        (self.matrix.transpose() * r).as_slice().to_vec()
    }

    /// Hessian `2 A^T W A` (constant).
    pub fn hessian(&self) -> DMatrix<f64> {
        let weighted = DMatrix::from_fn(self.matrix.nrows(), self.matrix.ncols(), |i, k| {
            self.matrix[(i, k)] * self.weights[i]
        });
        self.matrix.transpose() * weighted * 2.0
    }
}

/// Gradient of `chi2_B` with respect to the coefficients of `pot`.
pub fn chi_b_gradient(winding: &SurfaceGrid, pot: &CurrentPotential, boundary: &PlasmaBoundary) -> Result<Vec<f64>> {
    let jac = crate::currents::current_jacobian(winding, pot)?;
    let op = NormalFieldOperator::new(winding, &jac, boundary)?;
    Ok(op.gradient(&pot.coefficients()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::currents::{current_from_potential, current_jacobian};
    use crate::geometry::FourierSurface;
    use crate::MU_0;
    use std::f64::consts::PI;

    fn winding(n: usize) -> SurfaceGrid {
        SurfaceGrid::new(&FourierSurface::circular_torus(1.0, 0.3), n, n).unwrap()
    }

    fn plasma(n: usize) -> SurfaceGrid {
        let mut s = FourierSurface::circular_torus(1.0, 0.15);
        s.modes.push(crate::FourierMode { m: 1, n: 1, r_cos: 0.02, r_sin: 0.0, z_cos: 0.0, z_sin: 0.02 });
        SurfaceGrid::new(&s, n, n).unwrap()
    }

    #[test]
    fn zero_current_gives_zero_field() {
        let g = winding(12);
        let cur = SurfaceCurrent::zeros(g.len());
        let out = biot_savart(&g, &cur, &[Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 3.0)]).unwrap();
        assert!(out.iter().all(|s| s.b == Vec3::zeros()));
    }

    #[test]
    fn toroidal_solenoid_field() {
        let g = winding(64);
        let big_g = 1.0e6;
        let cur = current_from_potential(&g, &CurrentPotential::zeros(0, big_g, 0.0)).unwrap();
        let inside = Vec3::new(1.0, 0.0, 0.0);
        let outside = Vec3::new(2.0, 0.0, 0.5);
        let out = biot_savart(&g, &cur, &[inside, outside]).unwrap();
        let expected = MU_0 * big_g / (2.0 * PI * 1.0);
        let b_in = out[0].b;
        assert!((b_in.norm() - expected).abs() < 0.02 * expected, "{} vs {expected}", b_in.norm());
        // toroidal direction at zeta = 0 is +-y
        assert!(b_in.y.abs() > 0.999 * b_in.norm());
        assert!(out[1].b.norm() < 0.02 * expected);
    }

    #[test]
    fn node_collision_is_reported() {
        let g = winding(8);
        let cur = SurfaceCurrent::zeros(g.len());
        let err = biot_savart(&g, &cur, &[g.points[5]]).unwrap_err();
        assert!(matches!(err, Error::NodeCollision { point: 0, node: 5 }));
    }

    #[test]
    fn chi_b_trivial_values() {
        let g = winding(16);
        let p = plasma(12);
        let cur = SurfaceCurrent::zeros(g.len());
        assert_eq!(chi_b(&g, &cur, &PlasmaBoundary::new(p.clone())).unwrap(), 0.0);
        let area = p.area();
        let b = PlasmaBoundary::with_target(p.clone(), vec![1.0; p.len()]).unwrap();
        assert!((chi_b(&g, &cur, &b).unwrap() - area).abs() < 1e-12 * area);
    }

    #[test]
    fn solenoid_is_tangent_to_coaxial_torus() {
        let g = winding(64);
        let p = SurfaceGrid::new(&FourierSurface::circular_torus(1.0, 0.15), 32, 32).unwrap();
        let big_g = 1.0e6;
        let cur = current_from_potential(&g, &CurrentPotential::zeros(0, big_g, 0.0)).unwrap();
        let chi = chi_b(&g, &cur, &PlasmaBoundary::new(p.clone())).unwrap();
        let scale = MU_0 * big_g / (2.0 * PI);
        assert!(chi / p.area() < (0.02 * scale).powi(2));
    }

    #[test]
    fn intersecting_surfaces_rejected() {
        let g = winding(16);
        let p = SurfaceGrid::new(&FourierSurface::circular_torus(1.0, 0.4), 16, 16).unwrap();
        let cur = SurfaceCurrent::zeros(g.len());
        assert!(matches!(chi_b(&g, &cur, &PlasmaBoundary::new(p)), Err(Error::SurfacesIntersect { .. })));
    }

    #[test]
    fn operator_matches_direct_evaluation_and_fd() {
        let g = winding(16);
        let p = plasma(12);
        let mut pot = CurrentPotential::zeros(2, 1.0e6, 1.0e5);
        let coeffs: Vec<f64> = (0..pot.dof()).map(|i| 2e4 * (1.7 * i as f64).sin()).collect();
        pot.set_coefficients(&coeffs);
        let boundary = PlasmaBoundary::with_target(p.clone(), (0..p.len()).map(|i| 1e-3 * (i as f64).cos()).collect())
            .unwrap();
        let jac = current_jacobian(&g, &pot).unwrap();
        let op = NormalFieldOperator::new(&g, &jac, &boundary).unwrap();
        let cur = current_from_potential(&g, &pot).unwrap();
        let direct = chi_b(&g, &cur, &boundary).unwrap();
        assert!((op.chi_b(&coeffs) - direct).abs() < 1e-10 * direct);

        let grad = op.gradient(&coeffs);
        for k in [0usize, 7, 19] {
            let h = 1.0;
            let mut plus = coeffs.clone();
            plus[k] += h;
            let mut minus = coeffs.clone();
            minus[k] -= h;
            let fd = (op.chi_b(&plus) - op.chi_b(&minus)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-6 * grad[k].abs().max(1e-12), "k={k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn gradient_zero_at_origin_without_sources() {
        let g = winding(12);
        let p = plasma(8);
        let pot = CurrentPotential::zeros(2, 0.0, 0.0);
        let grad = chi_b_gradient(&g, &pot, &PlasmaBoundary::new(p)).unwrap();
        assert!(grad.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn field_is_affine_in_coefficients() {
        let g = winding(12);
        let pot = CurrentPotential::zeros(1, 3.0e5, 0.0);
        let jac = current_jacobian(&g, &pot).unwrap();
        let y = [Vec3::new(1.05, 0.1, 0.05)];
        let c1: Vec<f64> = (0..pot.dof()).map(|i| 1e3 * i as f64).collect();
        let c2: Vec<f64> = (0..pot.dof()).map(|i| -4e2 * (i as f64).sqrt()).collect();
        let sum: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a + b).collect();
        let b = |c: &[f64]| biot_savart(&g, &jac.apply(c), &y).unwrap()[0].b;
        let b0 = b(&vec![0.0; pot.dof()]);
        let lhs = b(&sum) - b0;
        let rhs = (b(&c1) - b0) + (b(&c2) - b0);
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(b0.norm()));
    }
}
