//! Run configuration: a TOML file with per-section defaults, then flag
//! overrides on top.

use std::path::{Path, PathBuf};

use coilforce::optimize::ScanParameter;
use coilforce::{ForceMetric, ObjectiveSpec, OptimizerConfig, Problem, SingularQuadrature};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemConfig,
    pub objective: ObjectiveConfig,
    pub optimizer: OptimizerConfig,
    pub epsconv: EpsConvConfig,
    pub scan: ScanConfig,
    pub output: OutputConfig,
}

/// Surfaces, grids, basis and net currents. Missing surface files fall back
/// to the bundled test problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub winding: Option<PathBuf>,
    pub plasma: Option<PathBuf>,
    pub winding_grid: [usize; 2],
    pub plasma_grid: [usize; 2],
    pub order: usize,
    pub net_poloidal: f64,
    pub net_toroidal: f64,
    /// Grid-shaped CSV of the external normal field on the plasma nodes (T).
    pub target: Option<PathBuf>,
    /// Potential JSON used as the force input or optimizer start.
    pub potential: Option<PathBuf>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let p = Problem::bundled();
        Self {
            winding: None,
            plasma: None,
            winding_grid: p.winding_grid,
            plasma_grid: p.plasma_grid,
            order: p.order,
            net_poloidal: p.net_poloidal,
            net_toroidal: p.net_toroidal,
            target: None,
            potential: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    L2,
    Lp,
    Ce,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub metric: MetricName,
    /// Exponent of the `lp` metric.
    pub p: u32,
    pub c0: f64,
    pub c1: f64,
    pub quadrature: SingularQuadrature,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        let spec = ObjectiveSpec::default();
        Self {
            lambda1: spec.lambda1,
            lambda2: spec.lambda2,
            gamma: spec.gamma,
            metric: MetricName::L2,
            p: 4,
            c0: spec.c0,
            c1: spec.c1,
            quadrature: SingularQuadrature::default(),
        }
    }
}

impl ObjectiveConfig {
    pub fn spec(&self) -> ObjectiveSpec {
        let force_metric = match self.metric {
            MetricName::L2 => ForceMetric::L2,
            MetricName::Lp => ForceMetric::Lp { p: self.p },
            MetricName::Ce => ForceMetric::Ce,
        };
        ObjectiveSpec {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            gamma: self.gamma,
            force_metric,
            c0: self.c0,
            c1: self.c1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsConvConfig {
    /// Offsets as multiples of each grid's spacing `h`, descending.
    pub eps_over_h: Vec<f64>,
    /// Absolute offsets (m), descending; replace `eps_over_h` when set.
    pub epsilons: Option<Vec<f64>>,
    /// Square winding grid resolutions to compare.
    pub grids: Vec<usize>,
}

impl Default for EpsConvConfig {
    fn default() -> Self {
        Self {
            eps_over_h: (0..=16).map(|k| 16.0 * 0.5f64.powf(k as f64 * 0.5)).collect(),
            epsilons: None,
            grids: vec![32, 64],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub parameter: ScanParameter,
    pub weights: Vec<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { parameter: ScanParameter::Lambda1, weights: vec![1e-17, 1e-16, 1e-15, 1e-14, 1e-13] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("coilforce-out") }
    }
}

impl Config {
    /// Parse a TOML file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Config = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for slot in [&mut cfg.problem.winding, &mut cfg.problem.plasma, &mut cfg.problem.target, &mut cfg.problem.potential] {
            if let Some(p) = slot.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        if cfg.output.dir.is_relative() && cfg.output.dir != OutputConfig::default().dir {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        self.objective.spec().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.optimizer.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let p = &self.problem;
        if p.winding_grid.iter().chain(&p.plasma_grid).any(|n| *n < 4) {
            return bad("grid sizes must be >= 4".into());
        }
        if !p.net_poloidal.is_finite() || !p.net_toroidal.is_finite() {
            return bad("net currents must be finite".into());
        }
        let eps = self.epsconv.epsilons.as_ref().unwrap_or(&self.epsconv.eps_over_h);
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return bad("epsconv offsets must be positive and finite".into());
        }
        if eps.windows(2).any(|w| w[1] > w[0]) {
            return bad("epsconv offsets must be sorted in descending order".into());
        }
        if self.epsconv.grids.is_empty() || self.epsconv.grids.iter().any(|n| *n < 4) {
            return bad("epsconv grids must be non-empty and >= 4".into());
        }
        if self.scan.weights.is_empty() {
            return bad("scan needs at least one weight".into());
        }
        if self.scan.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return bad("scan weights must be finite and >= 0".into());
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("configuration serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
