//! Barrier continuation: drive `mu -> 0` through a geometric schedule, warm-starting
//! each inner solve, and turn the terminal multiplier estimates `mu / g_j(x_mu)`
//! into a KKT certificate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificate::{check_kkt, CertificateError, KktCertificate, KktTolerances};
use crate::diagnostics::{slater_find, DEFAULT_SLATER_RES};
use crate::expr::ExprError;
use crate::inner::{
    default_inner_tol, solve_inner, InnerError, InnerMethod, InnerOptions, InnerResult, InnerStatus, IterateLog,
    DEFAULT_MAX_ITERS,
};
use crate::problem::Problem;

/// A stall with no accepted step only counts as a failure when the gradient is
/// above this fraction of `||grad f|| + sum_j lambda_j ||grad g_j||`; below it the
/// gradient is at the rounding floor of the multiplier ratios.
pub const STALL_RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuSchedule {
    pub mu0: f64,
    pub factor: f64,
    pub mu_min: f64,
}

impl Default for MuSchedule {
    fn default() -> Self {
        MuSchedule { mu0: 1.0, factor: 0.2, mu_min: 1e-8 }
    }
}

impl MuSchedule {
    pub fn validate(&self) -> Result<(), SolveError> {
        let ok = self.mu_min > 0.0 && self.mu0 > self.mu_min && self.factor > 0.0 && self.factor < 1.0;
        if ok && self.mu0.is_finite() {
            Ok(())
        } else {
            Err(SolveError::BadSchedule(*self))
        }
    }

    /// `mu0 * factor^k` for every `k` with the value not below `mu_min`.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let mu = self.mu0 * self.factor.powi(k);
            if mu < self.mu_min * (1.0 - 1e-12) {
                return out;
            }
            out.push(mu);
            k += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub mu: f64,
    pub x: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub objective: f64,
    pub inner_grad_norm: f64,
    pub inner_status: InnerStatus,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub points: Vec<PathPoint>,
    pub final_certificate: KktCertificate,
}

impl SolveTrace {
    /// Number of path steps on which `f(x_mu)` went up. Informational only: the
    /// inner solver returns arbitrary stationary points, not barrier minimisers.
    pub fn objective_increases(&self) -> usize {
        self.points.windows(2).filter(|w| w[1].objective > w[0].objective).count()
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationOptions {
    pub schedule: MuSchedule,
    pub method: InnerMethod,
    /// Fixed inner tolerance; `None` uses `max(1e-8, 1e-2 mu)`.
    pub inner_tol: Option<f64>,
    pub max_iters: usize,
    pub tolerances: KktTolerances,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            schedule: MuSchedule::default(),
            method: InnerMethod::default(),
            inner_tol: None,
            max_iters: DEFAULT_MAX_ITERS,
            tolerances: KktTolerances::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid mu schedule {0:?}")]
    BadSchedule(MuSchedule),
    #[error("no strictly feasible start point: {0}")]
    NoStartPoint(String),
    #[error("start point is not strictly feasible")]
    StartNotStrictlyFeasible,
    #[error("inner solve made no progress at mu = {mu} (gradient norm {grad_norm:e}), also after retrying with a gentler mu reduction")]
    Stalled { mu: f64, grad_norm: f64 },
    #[error(transparent)]
    Inner(#[from] InnerError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
    #[error("trace has {got} points, need at least {need}")]
    TraceTooShort { got: usize, need: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

fn gradient_scale(p: &Problem, x: &[f64], multipliers: &[f64]) -> Result<f64, ExprError> {
    let mut s = p.objective.eval_dual(x)?.gradient.norm();
    for (g, l) in p.constraints.iter().zip(multipliers) {
        s += l * g.eval_dual(x)?.gradient.norm();
    }
    Ok(s)
}

fn is_total_stall(p: &Problem, r: &InnerResult) -> Result<bool, ExprError> {
    if r.status != InnerStatus::LineSearchStall || r.iterations > 0 {
        return Ok(false);
    }
    Ok(r.grad_norm > STALL_RELATIVE_FLOOR * gradient_scale(p, &r.x, &r.evaluation.multipliers)?)
}

fn path_point(mu: f64, r: &InnerResult, p: &Problem) -> Result<PathPoint, ExprError> {
    Ok(PathPoint {
        mu,
        x: r.x.clone(),
        multipliers: r.evaluation.multipliers.clone(),
        objective: p.objective.eval(&r.x)?,
        inner_grad_norm: r.grad_norm,
        inner_status: r.status,
        inner_iterations: r.iterations,
    })
}

/// Receives `(mu, iterate)` for every accepted inner iterate.
pub type PathLog<'a> = &'a mut dyn FnMut(f64, &IterateLog);

/// Multipliers `mu / g_j` of the last path point, zeroed where `g_j > sqrt(mu)`.
pub fn terminal_multipliers(last: &PathPoint) -> Vec<f64> {
    let cutoff = last.mu.sqrt();
    last.multipliers.iter().map(|&l| if last.mu / l <= cutoff { l } else { 0.0 }).collect()
}

pub fn solve(
    p: &Problem,
    opts: &ContinuationOptions,
    x0: Option<&[f64]>,
    mut log: Option<PathLog<'_>>,
) -> Result<SolveTrace, SolveError> {
    opts.schedule.validate()?;
    let start: Vec<f64> = match x0 {
        Some(x) => x.to_vec(),
        None => match &p.interior_point {
            Some(x) => x.clone(),
            None => slater_find(p, DEFAULT_SLATER_RES).map_err(|e| SolveError::NoStartPoint(e.to_string()))?.x,
        },
    };
    match p.min_constraint(&start) {
        Ok(m) if m > 0.0 => {}
        _ => return Err(SolveError::StartNotStrictlyFeasible),
    }

    let mut run = |mu: f64, x: &[f64]| -> Result<InnerResult, SolveError> {
        let inner = InnerOptions {
            tol: opts.inner_tol.unwrap_or_else(|| default_inner_tol(mu)),
            max_iters: opts.max_iters,
            method: opts.method,
        };
        let r = match log.as_mut() {
            Some(sink) => {
                let mut forward = |it: &IterateLog| sink(mu, it);
                solve_inner(p, mu, x, &inner, Some(&mut forward))?
            }
            None => solve_inner(p, mu, x, &inner, None)?,
        };
        Ok(r)
    };

    let gentler = opts.schedule.factor.sqrt();
    let mut points: Vec<PathPoint> = Vec::new();
    let mut x = start;
    for mu in opts.schedule.values() {
        let mut r = run(mu, &x)?;
        if is_total_stall(p, &r)? {
            if let Some(prev) = points.last().map(|q| q.mu) {
                let mid = prev * gentler;
                let rm = run(mid, &x)?;
                if is_total_stall(p, &rm)? {
                    return Err(SolveError::Stalled { mu: mid, grad_norm: rm.grad_norm });
                }
                points.push(path_point(mid, &rm, p)?);
                x = rm.x;
                r = run(mu, &x)?;
            }
            if is_total_stall(p, &r)? {
                return Err(SolveError::Stalled { mu, grad_norm: r.grad_norm });
            }
        }
        points.push(path_point(mu, &r, p)?);
        x = r.x;
    }

    let last = points.last().expect("schedule has at least mu0");
    let lambda = terminal_multipliers(last);
    let tols = KktTolerances { activation: last.mu.sqrt(), ..opts.tolerances };
    let final_certificate = check_kkt(p, &last.x, &lambda, &tols)?;
    Ok(SolveTrace { points, final_certificate })
}

/// Limit estimate from the last `tail` path points: the final `x` and the mean
/// multiplier over the tail for constraints active at the end (zero otherwise).
pub fn accumulate(trace: &SolveTrace, tail: usize) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let n = trace.points.len();
    if tail == 0 || n < tail {
        return Err(SolveError::TraceTooShort { got: n, need: tail.max(1) });
    }
    let last = &trace.points[n - 1];
    let active = terminal_multipliers(last);
    let window = &trace.points[n - tail..];
    let lambda = active
        .iter()
        .enumerate()
        .map(|(j, &l)| if l == 0.0 { 0.0 } else { window.iter().map(|q| q.multipliers[j]).sum::<f64>() / tail as f64 })
        .collect();
    Ok((last.x.clone(), lambda))
}
