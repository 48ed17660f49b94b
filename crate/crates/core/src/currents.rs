//! Divergence-free sheet currents derived from a current potential.
//!
//! The total potential is `Phi_tot = G zeta / 2pi + I theta / 2pi + Phi`, with
//! `Phi` single valued. The sheet current (A/m) is
//!
//! ```text
//! j = [ d_zeta Phi_tot  d_theta r  -  d_theta Phi_tot  d_zeta r ] / |d_theta r x d_zeta r|
//! ```
//!
//! With this normalization `G` and `I` are the net poloidal and toroidal
//! currents in amperes, and `div_S j = 0` holds for the physical density.
//!
//! Coefficient vectors are ordered as a cosine block followed by a sine
//! block, each sorted by `(k, l)`.

use std::f64::consts::TAU;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::SurfaceGrid;
use crate::{Error, Result, Vec3};

/// The `(k, l)` harmonics of the single-valued potential for harmonic order `N`:
/// `k = 0, 0 < l <= N` and `1 <= k <= N, -N <= l <= N`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CurrentBasis {
    pub order: usize,
    pub modes: Vec<(i32, i32)>,
}

impl CurrentBasis {
    pub fn new(order: usize) -> Self {
        let n = order as i32;
        let mut modes = Vec::new();
        for k in 0..=n {
            for l in -n..=n {
                if k == 0 && l <= 0 {
                    continue;
                }
                modes.push((k, l));
            }
        }
        Self { order, modes }
    }

    /// Number of optimization unknowns, `2 [(2N+1) N + N]`.
    pub fn dof(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn position(&self, k: i32, l: i32) -> Option<usize> {
        self.modes.iter().position(|&m| m == (k, l))
    }
}

/// Net currents plus Fourier coefficients of the single-valued potential.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentPotential {
    /// Net poloidal current (A).
    pub net_poloidal: f64,
    /// Net toroidal current (A).
    pub net_toroidal: f64,
    pub basis: CurrentBasis,
    pub phi_cos: Vec<f64>,
    pub phi_sin: Vec<f64>,
}

impl CurrentPotential {
    pub fn zeros(order: usize, net_poloidal: f64, net_toroidal: f64) -> Self {
        let basis = CurrentBasis::new(order);
        let m = basis.modes.len();
        Self { net_poloidal, net_toroidal, basis, phi_cos: vec![0.0; m], phi_sin: vec![0.0; m] }
    }

    pub fn order(&self) -> usize {
        self.basis.order
    }

    pub fn dof(&self) -> usize {
        self.basis.dof()
    }

    /// Flattened `(cos block, sin block)` coefficient vector.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut out = self.phi_cos.clone();
        out.extend_from_slice(&self.phi_sin);
        out
    }

    pub fn set_coefficients(&mut self, coeffs: &[f64]) {
        let m = self.basis.modes.len();
        assert_eq!(coeffs.len(), 2 * m, "coefficient vector has wrong length");
        self.phi_cos.copy_from_slice(&coeffs[..m]);
        self.phi_sin.copy_from_slice(&coeffs[m..]);
    }

    pub fn with_coefficients(&self, coeffs: &[f64]) -> Self {
        let mut out = self.clone();
        out.set_coefficients(coeffs);
        out
    }

    /// `Phi(theta, zeta)` (single-valued part only).
    pub fn potential(&self, theta: f64, zeta: f64) -> f64 {
        self.basis
            .modes
            .iter()
            .zip(self.phi_cos.iter().zip(&self.phi_sin))
            .map(|(&(k, l), (c, s))| {
                let (sn, cs) = (k as f64 * theta + l as f64 * zeta).sin_cos();
                c * cs + s * sn
            })
            .sum()
    }

    /// Derivatives of the total potential at one point:
    /// `[d_t, d_z, d_tt, d_tz, d_zz]`, secular part included in the first two.
    fn stream_derivatives(&self, theta: f64, zeta: f64) -> [f64; 5] {
        let mut out = [self.net_toroidal / TAU, self.net_poloidal / TAU, 0.0, 0.0, 0.0];
        for (&(k, l), (c, s)) in self.basis.modes.iter().zip(self.phi_cos.iter().zip(&self.phi_sin)) {
            if *c == 0.0 && *s == 0.0 {
                continue;
            }
            let (k, l) = (k as f64, l as f64);
            let (sn, cs) = (k * theta + l * zeta).sin_cos();
            let first = s * cs - c * sn;
            let second = -(c * cs + s * sn);
            out[0] += k * first;
            out[1] += l * first;
            out[2] += k * k * second;
            out[3] += k * l * second;
            out[4] += l * l * second;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.basis.modes.len();
        if self.phi_cos.len() != m || self.phi_sin.len() != m {
            return Err(Error::InvalidInput("coefficient blocks do not match the basis".into()));
        }
        let finite = self.net_poloidal.is_finite()
            && self.net_toroidal.is_finite()
            && self.phi_cos.iter().chain(&self.phi_sin).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite current potential".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PotentialFile::from(self))?)
    }

    /// Read `{G, I, N, coefficients: [{k, l, cos, sin}]}`. Harmonics that are
    /// not listed are zero; listing one outside the basis is an error.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: PotentialFile = serde_json::from_str(text)?;
        let mut pot = CurrentPotential::zeros(file.order, file.net_poloidal, file.net_toroidal);
        for c in &file.coefficients {
            let idx = pot.basis.position(c.k, c.l).ok_or_else(|| {
                Error::InvalidInput(format!("harmonic (k={}, l={}) is outside the N={} basis", c.k, c.l, file.order))
            })?;
            pot.phi_cos[idx] = c.cos;
            pot.phi_sin[idx] = c.sin;
        }
        pot.validate()?;
        Ok(pot)
    }
}

#[derive(Serialize, Deserialize)]
struct PotentialFile {
    #[serde(rename = "G")]
    net_poloidal: f64,
    #[serde(rename = "I")]
    net_toroidal: f64,
    #[serde(rename = "N")]
    order: usize,
    coefficients: Vec<PotentialCoefficient>,
}

#[derive(Serialize, Deserialize)]
struct PotentialCoefficient {
    k: i32,
    l: i32,
    cos: f64,
    sin: f64,
}

impl From<&CurrentPotential> for PotentialFile {
    fn from(p: &CurrentPotential) -> Self {
        Self {
            net_poloidal: p.net_poloidal,
            net_toroidal: p.net_toroidal,
            order: p.order(),
            coefficients: p
                .basis
                .modes
                .iter()
                .zip(p.phi_cos.iter().zip(&p.phi_sin))
                .map(|(&(k, l), (&cos, &sin))| PotentialCoefficient { k, l, cos, sin })
                .collect(),
        }
    }
}

/// Sheet current sampled on a grid, with its angular derivatives.
///
/// The ambient tangential gradient (`grad_j`, 3x3 per node) follows from the
/// angular derivatives and the dual frame, see [`SurfaceCurrent::grad_j`].
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceCurrent {
    /// Current per unit length (A/m).
    pub j: Vec<Vec3>,
    pub d_theta_j: Vec<Vec3>,
    pub d_zeta_j: Vec<Vec3>,
}

impl SurfaceCurrent {
    pub fn zeros(n: usize) -> Self {
        Self { j: vec![Vec3::zeros(); n], d_theta_j: vec![Vec3::zeros(); n], d_zeta_j: vec![Vec3::zeros(); n] }
    }

    pub fn len(&self) -> usize {
        self.j.len()
    }

    pub fn is_empty(&self) -> bool {
        self.j.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let s = |v: &Vec<Vec3>| v.iter().map(|x| x * factor).collect();
        Self { j: s(&self.j), d_theta_j: s(&self.d_theta_j), d_zeta_j: s(&self.d_zeta_j) }
    }

    /// `self + factor * other`.
    pub fn add_scaled(&mut self, factor: f64, other: &SurfaceCurrent) {
        for (a, b) in self.j.iter_mut().zip(&other.j) {
            *a += b * factor;
        }
        for (a, b) in self.d_theta_j.iter_mut().zip(&other.d_theta_j) {
            *a += b * factor;
        }
        for (a, b) in self.d_zeta_j.iter_mut().zip(&other.d_zeta_j) {
            *a += b * factor;
        }
    }

    /// Tangential gradient tensor `T[i][k] = d_{S,i} j_k` at every node (A/m^2).
    pub fn grad_j(&self, grid: &SurfaceGrid) -> Vec<Matrix3<f64>> {
        (0..self.len())
            .map(|i| grid.dual_theta[i] * self.d_theta_j[i].transpose() + grid.dual_zeta[i] * self.d_zeta_j[i].transpose())
            .collect()
    }
}

/// Current and angular derivatives at one node from the stream-function
/// derivatives `[d_t, d_z, d_tt, d_tz, d_zz]` of the total potential.
fn sheet_at(grid: &SurfaceGrid, idx: usize, f: &[f64; 5]) -> (Vec3, Vec3, Vec3) {
    let (rt, rz) = (grid.d_theta_r[idx], grid.d_zeta_r[idx]);
    let (rtt, rtz, rzz) = (grid.d_theta_theta_r[idx], grid.d_theta_zeta_r[idx], grid.d_zeta_zeta_r[idx]);
    let s = grid.area_element[idx];
    let raw = rt.cross(&rz);
    let ds_t = raw.dot(&(rtt.cross(&rz) + rt.cross(&rtz))) / s;
    let ds_z = raw.dot(&(rtz.cross(&rz) + rt.cross(&rzz))) / s;
    let [ft, fz, ftt, ftz, fzz] = *f;
    let j = (rt * fz - rz * ft) / s;
    let dj_t = (rt * ftz + rtt * fz - rz * ftt - rtz * ft) / s - j * (ds_t / s);
    let dj_z = (rt * fzz + rtz * fz - rz * ftz - rzz * ft) / s - j * (ds_z / s);
    (j, dj_t, dj_z)
}

fn assemble<F>(grid: &SurfaceGrid, stream: F) -> SurfaceCurrent
where
    F: Fn(usize) -> [f64; 5] + Sync,
{
    let triples: Vec<(Vec3, Vec3, Vec3)> =
        (0..grid.len()).into_par_iter().map(|i| sheet_at(grid, i, &stream(i))).collect();
    let mut out = SurfaceCurrent::zeros(0);
    out.j.reserve(triples.len());
    for (j, dt, dz) in triples {
        out.j.push(j);
        out.d_theta_j.push(dt);
        out.d_zeta_j.push(dz);
    }
    out
}

/// Sheet current of `pot` on `grid`, with analytic angular derivatives.
pub fn current_from_potential(grid: &SurfaceGrid, pot: &CurrentPotential) -> Result<SurfaceCurrent> {
    pot.validate()?;
    Ok(assemble(grid, |i| {
        let (th, ze) = grid.angles(i);
        pot.stream_derivatives(th, ze)
    }))
}

/// Exact linear structure of the current in the potential coefficients:
/// `j(c) = secular + sum_k c_k columns[k]`.
#[derive(Clone, Debug)]
pub struct CurrentJacobian {
    pub basis: CurrentBasis,
    /// Current from `G` and `I` alone.
    pub secular: SurfaceCurrent,
    /// One column per coefficient, in `(cos block, sin block)` order.
    pub columns: Vec<SurfaceCurrent>,
}

/// Build the per-coefficient current columns for `pot`'s basis and net currents.
pub fn current_jacobian(grid: &SurfaceGrid, pot: &CurrentPotential) -> Result<CurrentJacobian> {
    pot.validate()?;
    let basis = pot.basis.clone();
    let secular = assemble(grid, |_| [pot.net_toroidal / TAU, pot.net_poloidal / TAU, 0.0, 0.0, 0.0]);
    let m = basis.modes.len();
    let columns = (0..2 * m)
        .map(|col| {
            let (k, l) = basis.modes[col % m];
            let is_sin = col >= m;
            let (k, l) = (k as f64, l as f64);
            assemble(grid, |i| {
                let (th, ze) = grid.angles(i);
                let (sn, cs) = (k * th + l * ze).sin_cos();
                // derivative and second-derivative factors of cos or sin
                let (first, second) = if is_sin { (cs, -sn) } else { (-sn, -cs) };
                [k * first, l * first, k * k * second, k * l * second, l * l * second]
            })
        })
        .collect();
    Ok(CurrentJacobian { basis, secular, columns })
}

impl CurrentJacobian {
    pub fn dof(&self) -> usize {
        self.columns.len()
    }

    /// Linear part `sum_k c_k columns[k]`.
    pub fn apply_linear(&self, coeffs: &[f64]) -> SurfaceCurrent {
        assert_eq!(coeffs.len(), self.dof());
        let mut out = SurfaceCurrent::zeros(self.secular.len());
        for (c, col) in coeffs.iter().zip(&self.columns) {
            if *c != 0.0 {
                out.add_scaled(*c, col);
            }
        }
        out
    }

    /// Full current `secular + sum_k c_k columns[k]`.
    pub fn apply(&self, coeffs: &[f64]) -> SurfaceCurrent {
        let mut out = self.apply_linear(coeffs);
        out.add_scaled(1.0, &self.secular);
        out
    }

    /// Pull back a cotangent on `(j, d_theta j, d_zeta j)` to coefficient space:
    /// `g_k = sum_x s_j . J_k + s_t . d_theta J_k + s_z . d_zeta J_k`.
    pub fn pullback(&self, s_j: &[Vec3], s_t: &[Vec3], s_z: &[Vec3]) -> Vec<f64> {
        self.columns
            .par_iter()
            .map(|col| {
                let mut acc = 0.0;
                for i in 0..col.len() {
                    acc += s_j[i].dot(&col.j[i]) + s_t[i].dot(&col.d_theta_j[i]) + s_z[i].dot(&col.d_zeta_j[i]);
                }
                acc
            })
            .collect()
    }
}
