//! Small self-contained test problem: a circular winding surface around a
//! shaped three-period plasma boundary.

use serde::{Deserialize, Serialize};

use crate::costs::{Objective, ObjectiveSpec};
use crate::currents::CurrentPotential;
use crate::geometry::{FourierSurface, SurfaceGrid};
use crate::magnetics::PlasmaBoundary;
use crate::Result;

/// Fourier table of the bundled winding surface.
pub const BUNDLED_WINDING: &str = include_str!("../assets/winding_surface.txt");
/// Fourier table of the bundled plasma boundary.
pub const BUNDLED_PLASMA: &str = include_str!("../assets/plasma_surface.txt");

/// Surfaces, resolutions, basis and net currents of one coil problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub winding: FourierSurface,
    pub plasma: FourierSurface,
    pub winding_grid: [usize; 2],
    pub plasma_grid: [usize; 2],
    /// Truncation order `N` of the potential basis.
    pub order: usize,
    /// Net poloidal current `G` (A).
    pub net_poloidal: f64,
    /// Net toroidal current `I` (A).
    pub net_toroidal: f64,
    /// Externally prescribed normal field on the plasma nodes (T).
    pub target: Option<Vec<f64>>,
}

impl Problem {
    /// The bundled 32x32, `N = 4` problem.
    pub fn bundled() -> Self {
        Self {
            winding: BUNDLED_WINDING.parse().expect("bundled winding surface parses"),
            plasma: BUNDLED_PLASMA.parse().expect("bundled plasma surface parses"),
            winding_grid: [32, 32],
            plasma_grid: [32, 32],
            order: 4,
            net_poloidal: 1.2e7,
            net_toroidal: 0.0,
            target: None,
        }
    }

    pub fn with_winding_grid(mut self, n_theta: usize, n_zeta: usize) -> Self {
        self.winding_grid = [n_theta, n_zeta];
        self
    }

    pub fn winding_grid(&self) -> Result<SurfaceGrid> {
        SurfaceGrid::new(&self.winding, self.winding_grid[0], self.winding_grid[1])
    }

    pub fn boundary(&self) -> Result<PlasmaBoundary> {
        let grid = SurfaceGrid::new(&self.plasma, self.plasma_grid[0], self.plasma_grid[1])?;
        match &self.target {
            Some(t) => PlasmaBoundary::with_target(grid, t.clone()),
            None => Ok(PlasmaBoundary::new(grid)),
        }
    }

    /// Potential with zero single-valued part.
    pub fn initial_potential(&self) -> CurrentPotential {
        CurrentPotential::zeros(self.order, self.net_poloidal, self.net_toroidal)
    }

    pub fn objective(&self, spec: ObjectiveSpec) -> Result<Objective> {
        Objective::new(self.winding_grid()?, self.boundary()?, &self.initial_potential(), spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::magnetics::check_disjoint;

    #[test]
    fn bundled_problem_is_consistent() {
        let p = Problem::bundled();
        assert_eq!(p.winding.n_fp, 1);
        assert_eq!(p.plasma.n_fp, 3);
        assert_eq!(p.initial_potential().dof(), 80);
        let winding = p.winding_grid().unwrap();
        let gap = check_disjoint(&winding, &p.boundary().unwrap().grid).unwrap();
        assert!(gap > 0.1, "{gap}");
    }

    #[test]
    fn bundled_tables_round_trip() {
        let p = Problem::bundled();
        let again: FourierSurface = p.winding.to_table().parse().unwrap();
        assert_eq!(again, p.winding);
    }

    #[test]
    fn target_length_is_checked() {
        let mut p = Problem::bundled();
        p.target = Some(vec![0.0; 7]);
        assert!(p.boundary().is_err());
    }
}
