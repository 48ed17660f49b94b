//! `coilforce`: Laplace-force maps, offset-convergence studies and
//! force-aware current-potential optimization from a TOML configuration.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coilforce::optimize::ScanParameter;
use coilforce::SingularQuadrature;

use config::{Config, MetricName};
use error::CliError;
use output::OutputDir;

#[derive(Parser, Debug)]
#[command(name = "coilforce", version, about = "Laplace self-force on current sheets and force-aware coil optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Force, current and normal-field maps for one potential.
    Force,
    /// Mean offset field and semi-sum force error against the offset.
    Epsconv {
        /// Offsets in units of the grid spacing, descending (comma-separated).
        #[arg(long, value_delimiter = ',')]
        eps_over_h: Option<Vec<f64>>,
        /// Square winding grid sizes (comma-separated).
        #[arg(long, value_delimiter = ',')]
        grids: Option<Vec<usize>>,
    },
    /// Minimize the composite cost.
    Optimize,
    /// Optimize once per weight of one penalty.
    Scan {
        #[arg(long, value_enum)]
        parameter: Option<ScanName>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        weights: Option<Vec<f64>>,
    },
    /// Run the four standard weight cases.
    Cases,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScanName {
    Lambda1,
    Lambda2,
    Gamma,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum QuadratureName {
    Exclude,
    Corrected,
}

/// Flags that override configuration values.
#[derive(Args, Debug)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, short, global = true)]
    output_dir: Option<PathBuf>,
    /// Winding surface Fourier table.
    #[arg(long, global = true)]
    winding: Option<PathBuf>,
    /// Plasma boundary Fourier table.
    #[arg(long, global = true)]
    plasma: Option<PathBuf>,
    /// Square winding grid size.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Square plasma grid size.
    #[arg(long, global = true)]
    plasma_grid: Option<usize>,
    #[arg(long, global = true)]
    order: Option<usize>,
    /// Net poloidal current G (A).
    #[arg(long, global = true, allow_negative_numbers = true)]
    net_poloidal: Option<f64>,
    /// Net toroidal current I (A).
    #[arg(long, global = true, allow_negative_numbers = true)]
    net_toroidal: Option<f64>,
    /// Potential JSON (force input or optimizer start).
    #[arg(long, global = true)]
    potential: Option<PathBuf>,
    /// Grid-shaped CSV of the external normal field (T).
    #[arg(long, global = true)]
    target: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda1: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda2: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long, global = true, value_enum)]
    metric: Option<MetricName>,
    /// Barrier onset stress (Pa).
    #[arg(long, global = true)]
    c0: Option<f64>,
    /// Rupture stress (Pa).
    #[arg(long, global = true)]
    c1: Option<f64>,
    #[arg(long, global = true, value_enum)]
    quadrature: Option<QuadratureName>,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    #[arg(long, global = true)]
    grad_tol: Option<f64>,
}

fn resolve(cli: &Cli) -> Result<Config, CliError> {
    let o = &cli.overrides;
    let mut cfg = match &o.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let p = &mut cfg.problem;
    if o.winding.is_some() {
        p.winding.clone_from(&o.winding);
    }
    if o.plasma.is_some() {
        p.plasma.clone_from(&o.plasma);
    }
    if o.potential.is_some() {
        p.potential.clone_from(&o.potential);
    }
    if o.target.is_some() {
        p.target.clone_from(&o.target);
    }
    if let Some(n) = o.grid {
        p.winding_grid = [n, n];
    }
    if let Some(n) = o.plasma_grid {
        p.plasma_grid = [n, n];
    }
    p.order = o.order.unwrap_or(p.order);
    p.net_poloidal = o.net_poloidal.unwrap_or(p.net_poloidal);
    p.net_toroidal = o.net_toroidal.unwrap_or(p.net_toroidal);
    let obj = &mut cfg.objective;
    obj.lambda1 = o.lambda1.unwrap_or(obj.lambda1);
    obj.lambda2 = o.lambda2.unwrap_or(obj.lambda2);
    obj.gamma = o.gamma.unwrap_or(obj.gamma);
    obj.metric = o.metric.unwrap_or(obj.metric);
    obj.c0 = o.c0.unwrap_or(obj.c0);
    obj.c1 = o.c1.unwrap_or(obj.c1);
    if let Some(q) = o.quadrature {
        obj.quadrature = match q {
            QuadratureName::Exclude => SingularQuadrature::Exclude,
            QuadratureName::Corrected => SingularQuadrature::Corrected,
        };
    }
    cfg.optimizer.max_iters = o.max_iters.unwrap_or(cfg.optimizer.max_iters);
    cfg.optimizer.grad_tol = o.grad_tol.unwrap_or(cfg.optimizer.grad_tol);
    if let Some(dir) = &o.output_dir {
        cfg.output.dir.clone_from(dir);
    }
    match &cli.command {
        Command::Epsconv { eps_over_h, grids } => {
            if let Some(e) = eps_over_h {
                cfg.epsconv.eps_over_h.clone_from(e);
                cfg.epsconv.epsilons = None;
            }
            if let Some(g) = grids {
                cfg.epsconv.grids.clone_from(g);
            }
        }
        Command::Scan { parameter, weights } => {
            if let Some(p) = parameter {
                cfg.scan.parameter = match p {
                    ScanName::Lambda1 => ScanParameter::Lambda1,
                    ScanName::Lambda2 => ScanParameter::Lambda2,
                    ScanName::Gamma => ScanParameter::Gamma,
                };
            }
            if let Some(w) = weights {
                cfg.scan.weights.clone_from(w);
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("COILFORCE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("COILFORCE_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let cfg = resolve(&cli)?;
    let out = OutputDir::create(&cfg.output.dir, &cfg.hash())?;
    std::fs::write(out.dir.join("config.toml"), toml::to_string(&cfg).map_err(|e| CliError::Output(e.to_string()))?)?;
    match cli.command {
        Command::Force => commands::force(&cfg, &out),
        Command::Epsconv { .. } => commands::epsconv(&cfg, &out),
        Command::Optimize => commands::optimize(&cfg, &out),
        Command::Scan { .. } => commands::scan(&cfg, &out),
        Command::Cases => commands::cases(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
