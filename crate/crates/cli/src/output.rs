//! Output files. Every CSV starts with `# coilforce <version> config=<sha256>`.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use coilforce::{ForceField, Objective, SurfaceGrid};
use serde::Serialize;

use crate::error::CliError;

pub struct OutputDir {
    pub dir: PathBuf,
    pub header: String,
}

impl OutputDir {
    pub fn create(dir: &Path, config_hash: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), header: format!("# coilforce {} config={config_hash}", env!("CARGO_PKG_VERSION")) })
    }

    pub fn subdir(&self, name: &str) -> Result<Self, CliError> {
        let dir = self.dir.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir, header: self.header.clone() })
    }

    /// CSV writer positioned after the provenance line.
    pub fn csv(&self, name: &str, columns: &[&str]) -> Result<csv::Writer<File>, CliError> {
        let path = self.dir.join(name);
        let mut file = File::create(&path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
        writeln!(file, "{}", self.header)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(columns)?;
        Ok(w)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
        self.text(name, &(text + "\n"))
    }

    pub fn text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Force, current and normal-field maps plus a JSON summary for one set of
/// coefficients.
pub fn write_maps(out: &OutputDir, objective: &Objective, coeffs: &[f64], force: &ForceField) -> Result<(), CliError> {
    let grid: &SurfaceGrid = &objective.grid;
    let current = objective.current(coeffs);

    let mut w = out.csv("force_map.csv", &["theta_index", "zeta_index", "fx", "fy", "fz", "f_normal", "f_tangential"])?;
    for idx in 0..grid.len() {
        let (i, j) = (idx / grid.n_zeta, idx % grid.n_zeta);
        let f = force.total[idx];
        w.write_record([
            i.to_string(),
            j.to_string(),
            num(f.x),
            num(f.y),
            num(f.z),
            num(force.normal_component[idx]),
            num(force.tangential_component[idx].norm()),
        ])?;
    }
    w.flush()?;

    let mut w = out.csv("current_map.csv", &["theta_index", "zeta_index", "j_norm"])?;
    for idx in 0..grid.len() {
        let (i, j) = (idx / grid.n_zeta, idx % grid.n_zeta);
        w.write_record([i.to_string(), j.to_string(), num(current.j[idx].norm())])?;
    }
    w.flush()?;

    let plasma = &objective.boundary.grid;
    let residual = objective.normal_field.residual(coeffs);
    let mut w = out.csv("normal_field.csv", &["theta_index", "zeta_index", "b_normal", "residual"])?;
    for idx in 0..plasma.len() {
        let (i, j) = (idx / plasma.n_zeta, idx % plasma.n_zeta);
        let r = residual[idx];
        w.write_record([i.to_string(), j.to_string(), num(r - objective.boundary.target(idx)), num(r)])?;
    }
    w.flush()?;
    Ok(())
}
