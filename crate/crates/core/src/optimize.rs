//! Preconditioned nonlinear conjugate gradient over potential coefficients,
//! weight scans, and the four standard weight cases.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::costs::{CostBreakdown, ForceMetric, Objective, ObjectiveSpec};
use crate::currents::CurrentPotential;
use crate::{Error, Result};

/// Conjugate-gradient and line-search settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Stop when `sqrt(g . D^-1 g / |f|)` falls below this.
    pub grad_tol: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub c_armijo: f64,
    /// Backtracking factor, in `(0, 1)`.
    pub shrink: f64,
    /// Restart period; `None` means `max(dof / 4, 50)`.
    pub restart_period: Option<usize>,
    /// Trial steps per line search before giving up.
    pub max_line_search: usize,
    /// Iteration budget of the barrier feasibility phase.
    pub restoration_max_iters: usize,
    pub preconditioner: PreconditionerKind,
}

/// Metric used to precondition the search directions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreconditionerKind {
    /// Diagonal of the quadratic part's Hessian.
    Diagonal,
    /// Dense quadratic Hessian plus the Gauss-Newton curvature of the force
    /// term, rebuilt at every restart.
    #[default]
    GaussNewton,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            grad_tol: 1e-8,
            c_armijo: 1e-4,
            shrink: 0.5,
            restart_period: None,
            max_line_search: 40,
            restoration_max_iters: 500,
            preconditioner: PreconditionerKind::GaussNewton,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || !(self.c_armijo > 0.0 && self.c_armijo < 1.0) {
            return Err(Error::InvalidInput("grad_tol must be > 0 and c_armijo in (0, 1)".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidInput(format!("shrink must be in (0, 1), got {}", self.shrink)));
        }
        if self.max_line_search == 0 {
            return Err(Error::InvalidInput("max_line_search must be >= 1".into()));
        }
        Ok(())
    }
}

/// Why a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradTol,
    MaxIters,
    LineSearchFailure,
    /// Accepted steps stopped lowering the cost beyond rounding level before
    /// the gradient test was met.
    Stalled,
    /// The barrier phase could not find a point below the rupture stress.
    RestorationFailed,
}

/// Everything one optimization run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub spec: ObjectiveSpec,
    pub config: OptimizerConfig,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub restoration_iterations: usize,
    pub wall_time_s: f64,
    /// Breakdown at the start and after every accepted step.
    pub history: Vec<CostBreakdown>,
    pub coefficients: Vec<f64>,
}

impl RunRecord {
    pub fn final_breakdown(&self) -> &CostBreakdown {
        self.history.last().expect("history holds at least the start point")
    }

    pub fn potential(&self, template: &CurrentPotential) -> CurrentPotential {
        template.with_coefficients(&self.coefficients)
    }

    /// One JSON object per history entry, then a summary line.
    pub fn to_json_lines(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Step<'a> {
            label: &'a str,
            iteration: usize,
            #[serde(flatten)]
            cost: &'a CostBreakdown,
        }
        let mut out = String::new();
        for (iteration, cost) in self.history.iter().enumerate() {
            out.push_str(&serde_json::to_string(&Step { label: &self.label, iteration, cost })?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(self)?);
        out.push('\n');
        Ok(out)
    }
}

/// Value, optional gradient, and optional breakdown at one point.
struct Point {
    f: f64,
    grad: Option<Vec<f64>>,
    breakdown: Option<CostBreakdown>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + alpha * b).collect()
}

enum CgEnd {
    Converged,
    MaxIters,
    LineSearch,
    Stalled,
    /// The caller's stop predicate fired.
    Target,
}

struct CgOutcome {
    x: Vec<f64>,
    iterations: usize,
    end: CgEnd,
}

/// Accepted steps over which the stall test looks back.
const STALL_WINDOW: usize = 5;
const STALL_RTOL: f64 = 1e-13;

enum Metric {
    Diagonal(Vec<f64>),
    Dense(Cholesky<f64, Dyn>),
}

impl Metric {
    fn apply(&self, g: &[f64]) -> Vec<f64> {
        match self {
            Metric::Diagonal(d) => g.iter().zip(d).map(|(g, d)| g / d).collect(),
            Metric::Dense(chol) => chol.solve(&DVector::from_column_slice(g)).as_slice().to_vec(),
        }
    }
}

/// Preconditioned Polak-Ribiere+ with Armijo backtracking. The first trial
/// of each line search is followed by the minimizer of the interpolating
/// parabola, which is exact on quadratics.
fn conjugate_gradient(
    eval: &mut dyn FnMut(&[f64], bool) -> Result<Point>,
    x0: Vec<f64>,
    metric_at: &mut dyn FnMut(&[f64]) -> Result<Metric>,
    config: &OptimizerConfig,
    max_iters: usize,
    mut on_accept: impl FnMut(&Point),
    done: impl Fn(&Point) -> bool,
) -> Result<CgOutcome> {
    let n = x0.len();
    let restart = config.restart_period.unwrap_or((n / 4).max(50)).max(1);
    let mut x = x0;
    let mut cur = eval(&x, true)?;
    if !cur.f.is_finite() {
        return Err(Error::Numerical("objective is not finite at the starting point".into()));
    }
    on_accept(&cur);
    let converged = |p: &Point, z: &[f64]| {
        let g = p.grad.as_ref().expect("gradient at accepted points");
        let gz = dot(g, z);
        gz == 0.0 || (gz / p.f.abs().max(f64::MIN_POSITIVE)).sqrt() <= config.grad_tol
    };
    let mut metric = metric_at(&x)?;

    let mut g = cur.grad.clone().expect("gradient requested");
    let mut z = metric.apply(&g);
    let mut d: Vec<f64> = z.iter().map(|v| -v).collect();
    let mut alpha_prev = 1.0;
    let mut gd_prev = dot(&g, &d);
    let mut since_restart = 0;
    let mut recent = std::collections::VecDeque::from([cur.f]);
    for iter in 0..max_iters {
        if done(&cur) {
            return Ok(CgOutcome { x, iterations: iter, end: CgEnd::Target });
        }
        if converged(&cur, &z) {
            return Ok(CgOutcome { x, iterations: iter, end: CgEnd::Converged });
        }
        let mut gd = dot(&g, &d);
        if !(gd < 0.0) {
            d = z.iter().map(|v| -v).collect();
            gd = dot(&g, &d);
            since_restart = 0;
        }
        let mut alpha = if iter == 0 { 1.0 } else { (alpha_prev * gd_prev / gd).clamp(1e-12, 1e12) };

        let mut accepted: Option<(f64, Point)> = None;
        for _ in 0..config.max_line_search {
            let trial = eval(&axpy(&x, alpha, &d), false)?;
            let armijo = |f: f64, a: f64| f.is_finite() && f <= cur.f + config.c_armijo * a * gd;
            if trial.f.is_finite() {
                let curvature = (trial.f - cur.f - gd * alpha) / (alpha * alpha);
                if curvature > 0.0 {
                    let a_q = (-gd / (2.0 * curvature)).clamp(1e-3 * alpha, 1e3 * alpha);
                    let q = eval(&axpy(&x, a_q, &d), true)?;
                    if armijo(q.f, a_q) && q.f <= trial.f {
                        accepted = Some((a_q, q));
                        break;
                    }
                    if !armijo(trial.f, alpha) {
                        alpha = if a_q < alpha { a_q.max(alpha * 0.1) } else { alpha * config.shrink };
                        continue;
                    }
                }
                if armijo(trial.f, alpha) {
                    let p = eval(&axpy(&x, alpha, &d), true)?;
                    accepted = Some((alpha, p));
                    break;
                }
            }
            alpha *= config.shrink;
        }
        let Some((step, next)) = accepted else {
            return Ok(CgOutcome { x, iterations: iter, end: CgEnd::LineSearch });
        };
        x = axpy(&x, step, &d);
        on_accept(&next);
        recent.push_back(next.f);
        if recent.len() > STALL_WINDOW {
            let oldest = recent.pop_front().unwrap_or(next.f);
            if oldest - next.f <= STALL_RTOL * next.f.abs() {
                return Ok(CgOutcome { x, iterations: iter + 1, end: CgEnd::Stalled });
            }
        }
        let g_new = next.grad.clone().ok_or_else(|| Error::Numerical("gradient unavailable at accepted point".into()))?;
        since_restart += 1;
        let refresh = since_restart >= restart;
        if refresh {
            since_restart = 0;
            metric = metric_at(&x)?;
        }
        let z_new = metric.apply(&g_new);
        let denom = dot(&g, &z);
        let beta = if denom > 0.0 { (dot(&g_new, &z_new) - dot(&g_new, &z)) / denom } else { 0.0 };
        let beta = if refresh { 0.0 } else { beta.max(0.0) };
        d = z_new.iter().zip(&d).map(|(z, d)| -z + beta * d).collect();
        alpha_prev = step;
        gd_prev = dot(&g_new, &d);
        g = g_new;
        z = z_new;
        cur = next;
    }
    if converged(&cur, &z) {
        return Ok(CgOutcome { x, iterations: max_iters, end: CgEnd::Converged });
    }
    Ok(CgOutcome { x, iterations: max_iters, end: CgEnd::MaxIters })
}

fn diagonal_metric(objective: &Objective) -> Vec<f64> {
    let diag = objective.quadratic_diagonal();
    let largest = diag.iter().cloned().fold(0.0, f64::max);
    let floor = if largest > 0.0 { 1e-12 * largest } else { 1.0 };
    diag.into_iter().map(|d| d.max(floor)).collect()
}

/// Dense metric at `x`; the diagonal is floored like the diagonal metric so
/// directions invisible to every term stay well scaled.
fn gauss_newton_metric(objective: &Objective, quadratic: &DMatrix<f64>, floor: &[f64], x: &[f64]) -> Result<Metric> {
    let mut m = quadratic + objective.force_curvature(x)?;
    for (k, f) in floor.iter().enumerate() {
        m[(k, k)] = m[(k, k)].max(*f);
    }
    match m.cholesky() {
        Some(chol) => Ok(Metric::Dense(chol)),
        None => Ok(Metric::Diagonal(floor.to_vec())),
    }
}

/// Minimize the composite cost from `x0`.
///
/// Under the barrier metric an infeasible start first goes through a
/// restoration phase that pushes every `|L|` below `c1 - 0.05 (c1 - c0)`.
pub fn minimize(objective: &Objective, x0: &[f64], config: &OptimizerConfig, label: &str) -> Result<RunRecord> {
    config.validate()?;
    objective.spec.validate()?;
    if x0.len() != objective.dof() {
        return Err(Error::InvalidInput(format!("expected {} coefficients, got {}", objective.dof(), x0.len())));
    }
    let start = Instant::now();
    let diag = diagonal_metric(objective);
    let quadratic = match config.preconditioner {
        PreconditionerKind::GaussNewton => Some(objective.quadratic_hessian().0),
        PreconditionerKind::Diagonal => None,
    };
    let floor: Vec<f64> = {
        let largest = diag.iter().cloned().fold(0.0, f64::max);
        vec![1e-12 * largest.max(f64::MIN_POSITIVE); diag.len()]
    };
    let mut metric_at = |x: &[f64]| -> Result<Metric> {
        match &quadratic {
            Some(q) => gauss_newton_metric(objective, q, &floor, x),
            None => Ok(Metric::Diagonal(diag.clone())),
        }
    };
    let mut history = Vec::new();
    let mut x = x0.to_vec();
    let mut restoration_iterations = 0;

    let barrier = objective.spec.gamma > 0.0 && objective.spec.force_metric == ForceMetric::Ce;
    if barrier {
        let first = objective.cost(&x)?;
        if first.breakdown.ruptured {
            history.push(first.breakdown);
            let mut eval = |c: &[f64], _grad: bool| -> Result<Point> {
                let (f, g, _) = objective.restoration(c)?;
                Ok(Point { f, grad: Some(g), breakdown: None })
            };
            let out = conjugate_gradient(
                &mut eval,
                x.clone(),
                &mut |_: &[f64]| Ok(Metric::Diagonal(diag.clone())),
                &OptimizerConfig { grad_tol: 1e-14, ..config.clone() },
                config.restoration_max_iters,
                |_| {},
                |p| p.f == 0.0,
            )?;
            restoration_iterations = out.iterations;
            x = out.x;
            if objective.cost(&x)?.breakdown.ruptured {
                return Ok(RunRecord {
                    label: label.to_string(),
                    spec: objective.spec,
                    config: config.clone(),
                    stop_reason: StopReason::RestorationFailed,
                    iterations: 0,
                    restoration_iterations,
                    wall_time_s: start.elapsed().as_secs_f64(),
                    history,
                    coefficients: x,
                });
            }
        }
    }

    let mut eval = |c: &[f64], grad: bool| -> Result<Point> {
        let e = if grad { objective.cost_and_gradient(c)? } else { objective.cost(c)? };
        let f = if e.breakdown.ruptured { f64::INFINITY } else { e.breakdown.total };
        Ok(Point { f, grad: e.gradient, breakdown: Some(e.breakdown) })
    };
    let out = conjugate_gradient(
        &mut eval,
        x,
        &mut metric_at,
        config,
        config.max_iters,
        |p| history.push(p.breakdown.clone().expect("breakdown")),
        |_| false,
    )?;
    let stop_reason = match out.end {
        CgEnd::Converged | CgEnd::Target => StopReason::GradTol,
        CgEnd::MaxIters => StopReason::MaxIters,
        CgEnd::LineSearch => StopReason::LineSearchFailure,
        CgEnd::Stalled => StopReason::Stalled,
    };
    Ok(RunRecord {
        label: label.to_string(),
        spec: objective.spec,
        config: config.clone(),
        stop_reason,
        iterations: out.iterations,
        restoration_iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
        history,
        coefficients: out.x,
    })
}

/// Minimize starting from the coefficients of `pot0`, whose basis and net
/// currents must match the objective.
pub fn minimize_potential(objective: &Objective, pot0: &CurrentPotential, config: &OptimizerConfig) -> Result<RunRecord> {
    if pot0.basis != objective.template.basis
        || pot0.net_poloidal != objective.template.net_poloidal
        || pot0.net_toroidal != objective.template.net_toroidal
    {
        return Err(Error::InvalidInput("start potential does not match the objective's basis or net currents".into()));
    }
    minimize(objective, &pot0.coefficients(), config, "run")
}

/// Weight varied by a scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanParameter {
    Lambda1,
    Lambda2,
    Gamma,
}

impl ScanParameter {
    pub fn apply(self, spec: &ObjectiveSpec, value: f64) -> ObjectiveSpec {
        let mut out = *spec;
        match self {
            ScanParameter::Lambda1 => out.lambda1 = value,
            ScanParameter::Lambda2 => out.lambda2 = value,
            ScanParameter::Gamma => out.gamma = value,
        }
        out
    }
}

/// One point of a trade-off scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub weight: f64,
    pub record: Option<RunRecord>,
    pub error: Option<String>,
}

/// Optimize once per weight. Runs go in the given order, each warm-started
/// from the previous converged coefficients; a failed run is recorded and
/// the scan continues from the last good point.
pub fn weight_scan(
    objective: &Objective,
    template: &ObjectiveSpec,
    parameter: ScanParameter,
    weights: &[f64],
    config: &OptimizerConfig,
) -> Result<Vec<ScanEntry>> {
    if weights.is_empty() {
        return Err(Error::InvalidInput("scan needs at least one weight".into()));
    }
    let mut start = vec![0.0; objective.dof()];
    let mut out = Vec::with_capacity(weights.len());
    for &w in weights {
        let spec = parameter.apply(template, w);
        let run = objective
            .with_spec(spec)
            .and_then(|obj| minimize(&obj, &start, config, &format!("{parameter:?}={w:e}").to_lowercase()));
        match run {
            Ok(rec) => {
                start.clone_from(&rec.coefficients);
                out.push(ScanEntry { weight: w, record: Some(rec), error: None });
            }
            Err(e) => out.push(ScanEntry { weight: w, record: None, error: Some(e.to_string()) }),
        }
    }
    Ok(out)
}

/// Named weight configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightCase {
    pub name: String,
    pub spec: ObjectiveSpec,
}

/// The four standard weight configurations with `c0 = 5 MPa`, `c1 = 10 MPa`:
/// current-regularized only, `L^2` force penalty, barrier force penalty, and
/// barrier penalty with light current and gradient regularization.
pub fn standard_cases() -> Vec<WeightCase> {
    let base = ObjectiveSpec { c0: 5.0e6, c1: 1.0e7, ..Default::default() };
    vec![
        WeightCase { name: "case1".into(), spec: ObjectiveSpec { lambda1: 1.5e-16, ..base } },
        WeightCase { name: "case2".into(), spec: ObjectiveSpec { gamma: 1e-17, force_metric: ForceMetric::L2, ..base } },
        WeightCase { name: "case3".into(), spec: ObjectiveSpec { gamma: 1e-16, force_metric: ForceMetric::Ce, ..base } },
        WeightCase {
            name: "case4".into(),
            spec: ObjectiveSpec { lambda1: 1e-19, lambda2: 1e-19, gamma: 1e-16, force_metric: ForceMetric::Ce, ..base },
        },
    ]
}

/// Run every standard case from a zero single-valued potential.
pub fn run_standard_cases(objective: &Objective, config: &OptimizerConfig) -> Result<Vec<RunRecord>> {
    let zero = vec![0.0; objective.dof()];
    standard_cases()
        .into_iter()
        .map(|case| minimize(&objective.with_spec(case.spec)?, &zero, config, &case.name))
        .collect()
}
