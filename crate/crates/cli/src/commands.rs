use std::path::Path;

use coilforce::currents::current_from_potential;
use coilforce::force::{epsilon_study, grid_spacing, laplace_force_with};
use coilforce::optimize::{minimize, standard_cases, weight_scan};
use coilforce::{CostBreakdown, CurrentPotential, FourierSurface, Objective, PlasmaBoundary, Problem, RunRecord, StopReason};
use serde::Serialize;

use crate::config::Config;
use crate::error::CliError;
use crate::output::{opt, write_maps, OutputDir};

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn input_err(path: &Path) -> impl Fn(coilforce::Error) -> CliError + '_ {
    move |source| CliError::Input { path: path.display().to_string(), source }
}

fn surface(path: &Option<std::path::PathBuf>, bundled: FourierSurface) -> Result<FourierSurface, CliError> {
    match path {
        Some(p) => read(p)?.parse().map_err(input_err(p)),
        None => Ok(bundled),
    }
}

pub fn problem(cfg: &Config) -> Result<Problem, CliError> {
    let bundled = Problem::bundled();
    let pc = &cfg.problem;
    let mut problem = Problem {
        winding: surface(&pc.winding, bundled.winding)?,
        plasma: surface(&pc.plasma, bundled.plasma)?,
        winding_grid: pc.winding_grid,
        plasma_grid: pc.plasma_grid,
        order: pc.order,
        net_poloidal: pc.net_poloidal,
        net_toroidal: pc.net_toroidal,
        target: None,
    };
    if let Some(path) = &pc.target {
        let [nt, nz] = pc.plasma_grid;
        problem.target = Some(PlasmaBoundary::parse_target_csv(&read(path)?, nt, nz).map_err(input_err(path))?);
    }
    Ok(problem)
}

/// Potential from the configured file, or the problem's zero-coefficient one.
fn start_potential(cfg: &Config, problem: &Problem) -> Result<CurrentPotential, CliError> {
    match &cfg.problem.potential {
        Some(path) => {
            let pot = CurrentPotential::from_json(&read(path)?).map_err(input_err(path))?;
            pot.validate().map_err(input_err(path))?;
            Ok(pot)
        }
        None => Ok(problem.initial_potential()),
    }
}

fn objective(cfg: &Config, problem: &Problem, template: &CurrentPotential) -> Result<Objective, CliError> {
    let mut obj = Objective::new(problem.winding_grid()?, problem.boundary()?, template, cfg.objective.spec())?;
    obj.quadrature = cfg.objective.quadrature;
    Ok(obj)
}

#[derive(Serialize)]
struct ForceSummary<'a> {
    cost: &'a CostBreakdown,
    max_normal_force: f64,
    max_tangential_force: f64,
    force_l2_norm: f64,
}

pub fn force(cfg: &Config, out: &OutputDir) -> Result<(), CliError> {
    let problem = problem(cfg)?;
    let pot = start_potential(cfg, &problem)?;
    let obj = objective(cfg, &problem, &pot)?;
    let coeffs = pot.coefficients();
    let eval = obj.cost(&coeffs)?;
    write_maps(out, &obj, &coeffs, &eval.force)?;
    let summary = ForceSummary {
        cost: &eval.breakdown,
        max_normal_force: eval.force.normal_component.iter().map(|v| v.abs()).fold(0.0, f64::max),
        max_tangential_force: eval.force.tangential_component.iter().map(|v| v.norm()).fold(0.0, f64::max),
        force_l2_norm: eval.force.l2_norm(&obj.grid),
    };
    out.json("summary.json", &summary)?;
    println!(
        "max |L| = {:.4e} Pa, rms |L| = {:.4e} Pa, chi2_B = {:.4e} T^2 m^2",
        eval.breakdown.max_force, eval.breakdown.rms_force, eval.breakdown.chi2_b
    );
    Ok(())
}

pub fn epsconv(cfg: &Config, out: &OutputDir) -> Result<(), CliError> {
    let problem = problem(cfg)?;
    let pot = start_potential(cfg, &problem)?;
    let mut w = out.csv(
        "epsconv.csv",
        &["grid", "epsilon", "eps_over_h", "mean_field_norm", "relative_error", "flag"],
    )?;
    for &n in &cfg.epsconv.grids {
        let grid = problem.clone().with_winding_grid(n, n).winding_grid()?;
        let j = current_from_potential(&grid, &pot)?;
        let reference = laplace_force_with(&grid, &j, &j, cfg.objective.quadrature)?;
        let h = grid_spacing(&grid);
        let eps: Vec<f64> = match &cfg.epsconv.epsilons {
            Some(abs) => abs.clone(),
            None => cfg.epsconv.eps_over_h.iter().map(|r| r * h).collect(),
        };
        for row in epsilon_study(&grid, &j, &reference, &eps) {
            w.write_record([
                format!("{n}x{n}"),
                format!("{:e}", row.epsilon),
                format!("{:e}", row.epsilon / row.h),
                opt(row.mean_field_norm),
                opt(row.relative_error),
                row.note.unwrap_or_default(),
            ])?;
        }
        println!("{n}x{n}: h = {h:.4e} m, {} offsets", eps.len());
    }
    w.flush()?;
    Ok(())
}

/// Record, potential and maps of one run in `out`.
fn write_run(out: &OutputDir, obj: &Objective, rec: &RunRecord) -> Result<(), CliError> {
    out.text("run.jsonl", &rec.to_json_lines()?)?;
    out.text("potential.json", &(rec.potential(&obj.template).to_json()? + "\n"))?;
    let eval = obj.cost(&rec.coefficients)?;
    write_maps(out, obj, &rec.coefficients, &eval.force)?;
    out.json("summary.json", rec.final_breakdown())
}

fn report(rec: &RunRecord) {
    let b = rec.final_breakdown();
    println!(
        "{}: {:?} after {} iterations; chi2_B = {:.4e}, chi2_j = {:.4e}, max |L| = {:.4e} Pa",
        rec.label, rec.stop_reason, rec.iterations, b.chi2_b, b.chi2_j, b.max_force
    );
}

fn check_run(rec: &RunRecord) -> Result<(), CliError> {
    match rec.stop_reason {
        StopReason::RestorationFailed => Err(CliError::Core(coilforce::Error::Numerical(format!(
            "{}: no iterate below the rupture stress was found",
            rec.label
        )))),
        StopReason::LineSearchFailure => {
            eprintln!("warning: {} stopped on a line-search failure", rec.label);
            Ok(())
        }
        _ => Ok(()),
    }
}

pub fn optimize(cfg: &Config, out: &OutputDir) -> Result<(), CliError> {
    let problem = problem(cfg)?;
    let pot = start_potential(cfg, &problem)?;
    let obj = objective(cfg, &problem, &pot)?;
    let rec = minimize(&obj, &pot.coefficients(), &cfg.optimizer, "optimize")?;
    write_run(out, &obj, &rec)?;
    report(&rec);
    check_run(&rec)
}

const TRADE_OFF_COLUMNS: [&str; 10] = [
    "label",
    "weight",
    "chi2_b",
    "chi2_j",
    "chi2_gradj",
    "chi2_f",
    "max_force",
    "max_normal_field_error",
    "stop_reason",
    "error",
];

fn trade_off_row(label: &str, weight: f64, rec: Option<&RunRecord>, error: Option<&str>) -> Vec<String> {
    let mut row = vec![label.to_string(), format!("{weight:e}")];
    match rec {
        Some(r) => {
            let b = r.final_breakdown();
            for v in [b.chi2_b, b.chi2_j, b.chi2_gradj, b.chi2_f, b.max_force, b.max_normal_field_error] {
                row.push(format!("{v:e}"));
            }
            row.push(serde_json::to_value(r.stop_reason).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
        }
        None => row.extend(std::iter::repeat_n(String::new(), 7)),
    }
    row.push(error.unwrap_or_default().to_string());
    row
}

pub fn scan(cfg: &Config, out: &OutputDir) -> Result<(), CliError> {
    let problem = problem(cfg)?;
    let pot = start_potential(cfg, &problem)?;
    let obj = objective(cfg, &problem, &pot)?;
    let entries = weight_scan(&obj, &cfg.objective.spec(), cfg.scan.parameter, &cfg.scan.weights, &cfg.optimizer)?;
    let mut w = out.csv("scan.csv", &TRADE_OFF_COLUMNS)?;
    let mut lines = String::new();
    for e in &entries {
        let label = format!("{:?}", cfg.scan.parameter).to_lowercase();
        w.write_record(trade_off_row(&label, e.weight, e.record.as_ref(), e.error.as_deref()))?;
        match &e.record {
            Some(rec) => {
                lines += &rec.to_json_lines()?;
                report(rec);
            }
            None => eprintln!("warning: weight {:e} failed: {}", e.weight, e.error.as_deref().unwrap_or("")),
        }
    }
    w.flush()?;
    out.text("scan.jsonl", &lines)?;
    Ok(())
}

pub fn cases(cfg: &Config, out: &OutputDir) -> Result<(), CliError> {
    let problem = problem(cfg)?;
    let pot = start_potential(cfg, &problem)?;
    let base = objective(cfg, &problem, &pot)?;
    let mut w = out.csv("cases.csv", &TRADE_OFF_COLUMNS)?;
    let mut failure = None;
    for case in standard_cases() {
        let obj = base.with_spec(case.spec)?;
        let rec = minimize(&obj, &pot.coefficients(), &cfg.optimizer, &case.name)?;
        write_run(&out.subdir(&case.name)?, &obj, &rec)?;
        w.write_record(trade_off_row(&case.name, case.spec.gamma, Some(&rec), None))?;
        report(&rec);
        if let Err(e) = check_run(&rec) {
            failure.get_or_insert(e);
        }
    }
    w.flush()?;
    failure.map_or(Ok(()), Err)
}
