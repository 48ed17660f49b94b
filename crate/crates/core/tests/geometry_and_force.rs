use std::f64::consts::PI;

use coilforce::currents::current_from_potential;
use coilforce::force::{laplace_force, laplace_force_with, mean_field_with};
use coilforce::geometry::{geometric_bound_check, project_tangent, surface_divergence, SurfacePoint};
use coilforce::{
    CurrentPotential, DiffMethod, FourierSurface, ParametricSurface, Problem, SingularQuadrature, SurfaceGrid, Vec3,
};

/// Sphere of radius `rho` covered twice by a torus-like parametrization,
/// shifted in `theta` so no node sits on a pole.
struct Sphere {
    rho: f64,
}

impl ParametricSurface for Sphere {
    fn point(&self, theta: f64, zeta: f64) -> SurfacePoint {
        let t = theta + 0.1;
        let (st, ct) = t.sin_cos();
        let (sz, cz) = zeta.sin_cos();
        let r = self.rho;
        SurfacePoint {
            r: Vec3::new(r * st * cz, r * st * sz, r * ct),
            r_t: Vec3::new(r * ct * cz, r * ct * sz, -r * st),
            r_z: Vec3::new(-r * st * sz, r * st * cz, 0.0),
            r_tt: Vec3::new(-r * st * cz, -r * st * sz, -r * ct),
            r_tz: Vec3::new(-r * ct * sz, r * ct * cz, 0.0),
            r_zz: Vec3::new(-r * st * cz, -r * st * sz, 0.0),
        }
    }

    fn normal_sign(&self, theta: f64, _zeta: f64) -> Option<f64> {
        Some(-(theta + 0.1).sin().signum())
    }
}

fn mixed_potential(order: usize) -> CurrentPotential {
    let mut pot = CurrentPotential::zeros(order, 1.2e7, 3.0e6);
    let c: Vec<f64> = (0..pot.dof()).map(|i| 4e5 * ((i as f64 + 1.0) * 0.77).sin() / (1.0 + i as f64)).collect();
    pot.set_coefficients(&c);
    pot
}

#[test]
fn sphere_frame_and_curvature_are_exact() {
    let rho = 0.7;
    let g = SurfaceGrid::new(&Sphere { rho }, 16, 12).unwrap();
    for i in 0..g.len() {
        let radial = g.points[i] / rho;
        assert!((g.normal[i] - radial).norm() < 1e-12);
        assert!((g.mean_curvature_sum[i] - 2.0 / rho).abs() < 1e-10);
        assert!((g.gauss_curvature[i] - 1.0 / (rho * rho)).abs() < 1e-10);
    }
}

#[test]
fn sphere_bound_is_half_inverse_radius() {
    let rho = 0.7;
    let g = SurfaceGrid::new(&Sphere { rho }, 16, 12).unwrap();
    let bound = geometric_bound_check(&g);
    assert!((bound - 0.5 / rho).abs() < 1e-12 * bound, "{bound}");
}

#[test]
fn geometric_bound_is_grid_stable() {
    let surface = Problem::bundled().winding;
    let coarse = geometric_bound_check(&SurfaceGrid::new(&surface, 32, 32).unwrap());
    let fine = geometric_bound_check(&SurfaceGrid::new(&surface, 64, 64).unwrap());
    assert!(coarse.is_finite() && fine.is_finite());
    assert!((fine - coarse).abs() < 0.2 * coarse, "{coarse} vs {fine}");
}

#[test]
fn refined_grid_reproduces_shared_nodes() {
    let surface = Problem::bundled().plasma;
    let coarse = SurfaceGrid::new(&surface, 32, 32).unwrap();
    let fine = SurfaceGrid::new(&surface, 64, 64).unwrap();
    for i in 0..32 {
        for j in 0..32 {
            let (a, b) = (coarse.index(i, j), fine.index(2 * i, 2 * j));
            assert_eq!(coarse.points[a], fine.points[b]);
            assert_eq!(coarse.normal[a], fine.normal[b]);
        }
    }
}

#[test]
fn frames_are_orthonormal() {
    let g = SurfaceGrid::new(&Problem::bundled().plasma, 24, 24).unwrap();
    for i in 0..g.len() {
        assert!((g.normal[i].norm() - 1.0).abs() < 1e-14);
        assert!(g.normal[i].dot(&g.d_theta_r[i]).abs() < 1e-12 * g.d_theta_r[i].norm());
        assert!(g.normal[i].dot(&g.d_zeta_r[i]).abs() < 1e-12 * g.d_zeta_r[i].norm());
    }
}

#[test]
fn projector_divergence_matches_differentiated_projection() {
    // -2H n against div_S(pi e_i) by periodic differences on a 64x64 torus
    let g = SurfaceGrid::new(&FourierSurface::circular_torus(1.0, 0.3), 64, 64).unwrap();
    let scale = g.mean_curvature_sum.iter().map(|h| h.abs()).fold(0.0, f64::max);
    for (axis, e) in [Vec3::x(), Vec3::y(), Vec3::z()].iter().enumerate() {
        let field: Vec<Vec3> = g.normal.iter().map(|n| project_tangent(n, e)).collect();
        let div = surface_divergence(&g, &field, DiffMethod::FiniteDifference);
        for i in 0..g.len() {
            let exact = -g.mean_curvature_sum[i] * g.normal[i][axis];
            assert!((div[i] - exact).abs() <= 1e-3 * scale, "axis {axis} node {i}: {} vs {exact}", div[i]);
        }
    }
}

#[test]
fn force_norm_converges_under_refinement() {
    let problem = Problem::bundled();
    let pot = mixed_potential(3);
    let norm = |n: usize| {
        let g = problem.clone().with_winding_grid(n, n).winding_grid().unwrap();
        let j = current_from_potential(&g, &pot).unwrap();
        laplace_force(&g, &j, &j).unwrap().l2_norm(&g)
    };
    let (mid, fine) = (norm(64), norm(128));
    assert!((fine - mid).abs() < 0.02 * fine, "{mid} vs {fine}");
}

#[test]
fn self_cell_correction_is_closer_to_fine_grid() {
    let problem = Problem::bundled();
    let pot = mixed_potential(2);
    let fine_grid = problem.clone().with_winding_grid(96, 96).winding_grid().unwrap();
    let fine_j = current_from_potential(&fine_grid, &pot).unwrap();
    let reference = laplace_force_with(&fine_grid, &fine_j, &fine_j, SingularQuadrature::Corrected).unwrap();
    let reference_norm = reference.l2_norm(&fine_grid);
    let g = problem.with_winding_grid(32, 32).winding_grid().unwrap();
    let j = current_from_potential(&g, &pot).unwrap();
    let err = |q| (laplace_force_with(&g, &j, &j, q).unwrap().l2_norm(&g) - reference_norm).abs();
    assert!(err(SingularQuadrature::Corrected) < 0.2 * err(SingularQuadrature::Exclude));
}

#[test]
fn force_scales_quadratically_without_net_currents() {
    let g = Problem::bundled().winding_grid().unwrap();
    let mut pot = mixed_potential(3);
    pot.net_poloidal = 0.0;
    pot.net_toroidal = 0.0;
    let j = current_from_potential(&g, &pot).unwrap();
    let t = 2.5;
    let scaled = current_from_potential(&g, &pot.with_coefficients(&pot.coefficients().iter().map(|c| t * c).collect::<Vec<_>>()))
        .unwrap();
    let base = laplace_force(&g, &j, &j).unwrap();
    let big = laplace_force(&g, &scaled, &scaled).unwrap();
    let scale = base.max_magnitude();
    for (a, b) in base.total.iter().zip(&big.total) {
        assert!((b - a * (t * t)).norm() < 1e-12 * scale * t * t);
    }
}

#[test]
fn pure_poloidal_mean_field_is_half_the_interior_field() {
    // inside a toroidal solenoid B = mu0 G / (2 pi rho), outside 0
    let problem = Problem::bundled();
    let big_g = problem.net_poloidal;
    let worst = |n: usize, q: SingularQuadrature| {
        let g = problem.clone().with_winding_grid(n, n).winding_grid().unwrap();
        let j = current_from_potential(&g, &CurrentPotential::zeros(0, big_g, 0.0)).unwrap();
        mean_field_with(&g, &j, q)
            .iter()
            .enumerate()
            .map(|(i, field)| {
                let rho = g.points[i].x.hypot(g.points[i].y);
                let expected = coilforce::MU_0 * big_g / (4.0 * PI * rho);
                (field.norm() - expected).abs() / expected
            })
            .fold(0.0f64, f64::max)
    };
    let (coarse, fine) = (worst(32, SingularQuadrature::Exclude), worst(64, SingularQuadrature::Exclude));
    assert!(fine < 0.6 * coarse, "{coarse} -> {fine}");
    let corrected = worst(64, SingularQuadrature::Corrected);
    assert!(corrected < 0.1 * fine, "{corrected}");
}
