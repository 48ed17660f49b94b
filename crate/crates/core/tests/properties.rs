use std::sync::OnceLock;

use coilforce::costs::{f_e, f_e_derivative};
use coilforce::currents::current_from_potential;
use coilforce::force::{decompose, laplace_force};
use coilforce::geometry::project_tangent;
use coilforce::{CurrentBasis, CurrentPotential, FourierSurface, ForceField, ObjectiveSpec, Problem, SurfaceCurrent, SurfaceGrid, Vec3};
use proptest::prelude::*;

fn grid() -> &'static SurfaceGrid {
    static GRID: OnceLock<SurfaceGrid> = OnceLock::new();
    GRID.get_or_init(|| SurfaceGrid::new(&FourierSurface::circular_torus(1.0, 0.35), 12, 12).unwrap())
}

fn current(coeffs: &[f64], g: f64, i: f64) -> SurfaceCurrent {
    let mut pot = CurrentPotential::zeros(2, g, i);
    pot.set_coefficients(coeffs);
    current_from_potential(grid(), &pot).unwrap()
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e5..1e5f64, CurrentBasis::new(2).dof())
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (-1e7..1e7f64, -1e7..1e7f64, -1e7..1e7f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn combine(a: f64, x: &SurfaceCurrent, b: f64, y: &SurfaceCurrent) -> SurfaceCurrent {
    let mut out = x.scaled(a);
    out.add_scaled(b, y);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn force_is_bilinear(c1 in coeffs(), c2 in coeffs(), c3 in coeffs(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let g = grid();
        let (j1, j2, j3) = (current(&c1, 1e6, 0.0), current(&c2, 0.0, 2e5), current(&c3, 5e5, 1e5));
        let lin = combine(a, &j1, b, &j2);
        let first = laplace_force(g, &lin, &j3).unwrap();
        let second = laplace_force(g, &j3, &lin).unwrap();
        let f13 = laplace_force(g, &j1, &j3).unwrap();
        let f23 = laplace_force(g, &j2, &j3).unwrap();
        let f31 = laplace_force(g, &j3, &j1).unwrap();
        let f32 = laplace_force(g, &j3, &j2).unwrap();
        let scale = (a.abs() + b.abs()) * f13.max_magnitude().max(f23.max_magnitude()).max(f31.max_magnitude()).max(f32.max_magnitude());
        for y in 0..g.len() {
            prop_assert!((first.total[y] - (f13.total[y] * a + f23.total[y] * b)).norm() <= 1e-12 * scale);
            prop_assert!((second.total[y] - (f31.total[y] * a + f32.total[y] * b)).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn barrier_is_monotone_below_rupture(w1 in 0.0..1e7f64, w2 in 0.0..1e7f64) {
        let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
        let (a, _) = f_e(lo, 5e6, 1e7);
        let (b, _) = f_e(hi, 5e6, 1e7);
        prop_assert!(a <= b);
        prop_assert!(a >= 0.0);
        prop_assert!(f_e_derivative(lo, 5e6, 1e7) <= f_e_derivative(hi, 5e6, 1e7));
    }

    #[test]
    fn decomposition_recomposes(forces in prop::collection::vec(vec3(), 144)) {
        let g = grid();
        let field = decompose(&ForceField::from_total(g, forces.clone()), g);
        for (y, (total, back)) in forces.iter().zip(field.recompose(g)).enumerate() {
            prop_assert!((back - total).norm() <= 1e-15 * total.norm().max(1.0));
            prop_assert!(field.tangential_component[y].dot(&g.normal[y]).abs() <= 1e-8 * total.norm().max(1.0));
        }
    }

    #[test]
    fn projector_is_idempotent(v in vec3(), node in 0usize..144) {
        let n = grid().normal[node];
        let p = project_tangent(&n, &v);
        prop_assert!((project_tangent(&n, &p) - p).norm() <= 1e-15 * v.norm().max(1.0));
        prop_assert!(p.dot(&n).abs() <= 1e-15 * v.norm().max(1.0));
    }

    #[test]
    fn dof_formula(order in 0usize..30) {
        prop_assert_eq!(CurrentBasis::new(order).dof(), 2 * ((2 * order + 1) * order + order));
    }

    #[test]
    fn potential_file_round_trip_is_bitwise(c in coeffs(), g in -1e7..1e7f64, i in -1e7..1e7f64) {
        let mut pot = CurrentPotential::zeros(2, g, i);
        pot.set_coefficients(&c);
        let back = CurrentPotential::from_json(&pot.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, pot);
    }

    #[test]
    fn surface_table_round_trip(r in 0.5..2.0f64, a in 0.05..0.3f64, d in -0.02..0.02f64) {
        let mut s = FourierSurface::circular_torus(r, a);
        s.modes.push(coilforce::FourierMode { m: 2, n: 1, r_cos: d, r_sin: 0.0, z_cos: 0.0, z_sin: d });
        s.n_fp = 3;
        let back: FourierSurface = s.to_table().parse().unwrap();
        prop_assert_eq!(back, s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn cost_components_are_nonnegative(scale in 0.0..1.0f64, seed in 0u64..1000) {
        static OBJ: OnceLock<coilforce::Objective> = OnceLock::new();
        let spec = ObjectiveSpec { lambda1: 1e-16, lambda2: 1e-18, gamma: 1e-17, ..Default::default() };
        let obj = OBJ.get_or_init(|| Problem::bundled().with_winding_grid(16, 16).objective(spec).unwrap());
        let x: Vec<f64> = (0..obj.dof()).map(|k| scale * 1e5 * ((k as u64 * 31 + seed) as f64).sin()).collect();
        let b = obj.cost(&x).unwrap().breakdown;
        prop_assert!(b.chi2_b >= 0.0 && b.chi2_j >= 0.0 && b.chi2_gradj >= 0.0 && b.chi2_f >= 0.0);
        let total = b.chi2_b + spec.lambda1 * b.chi2_j + spec.lambda2 * b.chi2_gradj + spec.gamma * b.chi2_f;
        prop_assert!((b.total - total).abs() <= 1e-12 * total);
    }
}
