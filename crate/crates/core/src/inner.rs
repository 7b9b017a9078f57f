//! Strictly feasible descent to a stationary point of `phi_mu` for fixed `mu`.
//!
//! The barrier need not be convex, so the solver only asks for `grad phi_mu = 0`
//! and never for a global minimiser. Each step first halves the trial step until
//! the trial point is strictly feasible, then backtracks to Armijo decrease.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::{barrier_eval, barrier_hessian, barrier_value, BarrierEvaluation, BarrierValue};
use crate::expr::ExprError;
use crate::problem::Problem;

pub const ARMIJO_C1: f64 = 1e-4;
pub const MIN_STEP: f64 = 1e-16;
pub const MAX_FEASIBILITY_HALVINGS: usize = 200;
pub const DEFAULT_MAX_ITERS: usize = 5000;
const EIGENVALUE_FLOOR: f64 = 1e-8;

/// `max(1e-8, 1e-2 * mu)`.
pub fn default_inner_tol(mu: f64) -> f64 {
    (1e-2 * mu).max(1e-8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMethod {
    /// `d = -grad`. Armijo on barrier values stalls near `||grad|| ~ 1e-4` at small
    /// `mu`, where the decrease drops below the rounding of `phi`.
    SteepestDescent,
    /// Shifted Newton: `(H + sigma I) d = -grad` with the smallest shift making the
    /// matrix positive definite; steepest descent if the solve fails.
    #[default]
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerStatus {
    Converged,
    MaxIters,
    LineSearchStall,
}

#[derive(Debug, Clone)]
pub struct InnerOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub method: InnerMethod,
}

impl InnerOptions {
    pub fn for_mu(mu: f64) -> InnerOptions {
        InnerOptions { tol: default_inner_tol(mu), max_iters: DEFAULT_MAX_ITERS, method: InnerMethod::default() }
    }
}

#[derive(Debug, Clone)]
pub struct InnerResult {
    pub x: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: InnerStatus,
    /// Barrier data at `x`.
    pub evaluation: BarrierEvaluation,
}

/// One accepted iterate (iteration 0 is the start point, with step 0).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateLog {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum InnerError {
    #[error("start point is not strictly feasible")]
    NotStrictlyFeasible,
    #[error("mu must be positive and tol positive")]
    BadParameters,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

enum StepOutcome {
    Accepted { x: Vec<f64>, t: f64 },
    Stall,
}

fn trial_value(p: &Problem, x: &[f64], mu: f64) -> BarrierValue {
    // expression-domain failures outside K are treated like leaving the barrier domain
    barrier_value(p, x, mu).unwrap_or(BarrierValue::Infinite)
}

fn line_search(p: &Problem, mu: f64, x: &[f64], phi: f64, d: &DVector<f64>, slope: f64) -> StepOutcome {
    let at = |t: f64| -> Vec<f64> { x.iter().zip(d.iter()).map(|(xi, di)| xi + t * di).collect() };
    let mut t = 1.0;
    let mut halvings = 0;
    let mut trial = at(t);
    let mut value = trial_value(p, &trial, mu);
    while !value.is_finite() {
        if halvings == MAX_FEASIBILITY_HALVINGS {
            return StepOutcome::Stall;
        }
        t *= 0.5;
        halvings += 1;
        trial = at(t);
        value = trial_value(p, &trial, mu);
    }
    loop {
        if let BarrierValue::Finite(v) = value {
            if v <= phi + ARMIJO_C1 * t * slope && v < phi {
                return StepOutcome::Accepted { x: trial, t };
            }
        }
        t *= 0.5;
        if t < MIN_STEP {
            return StepOutcome::Stall;
        }
        trial = at(t);
        value = trial_value(p, &trial, mu);
    }
}

fn newton_direction(p: &Problem, mu: f64, x: &[f64], grad: &DVector<f64>) -> Option<DVector<f64>> {
    let h = barrier_hessian(p, x, mu).ok()?;
    let n = h.nrows();
    let lowest = SymmetricEigen::new(h.clone()).eigenvalues.min();
    let shift = if lowest >= EIGENVALUE_FLOOR { 0.0 } else { EIGENVALUE_FLOOR - lowest };
    let shifted = h + DMatrix::identity(n, n) * shift;
    let d = Cholesky::new(shifted)?.solve(&(-grad));
    d.iter().all(|v| v.is_finite()).then_some(d)
}

/// Runs descent from `x_start`; `log` receives every accepted iterate.
pub fn solve_inner(
    p: &Problem,
    mu: f64,
    x_start: &[f64],
    opts: &InnerOptions,
    mut log: Option<&mut dyn FnMut(&IterateLog)>,
) -> Result<InnerResult, InnerError> {
    if !(mu > 0.0 && opts.tol > 0.0) {
        return Err(InnerError::BadParameters);
    }
    let mut x = x_start.to_vec();
    let mut eval = match barrier_eval(p, &x, mu) {
        Ok(e) if e.value.is_finite() => e,
        Ok(_) | Err(ExprError::LnDomain(_)) | Err(ExprError::DivisionByZero) | Err(ExprError::NonFinite) => {
            return Err(InnerError::NotStrictlyFeasible)
        }
        Err(e) => return Err(e.into()),
    };
    let mut iterations = 0;
    let mut last_step = 0.0;
    loop {
        let grad = eval.gradient.clone().expect("finite barrier has a gradient");
        let phi = eval.value.finite().expect("finite barrier");
        let grad_norm = grad.norm();
        if let Some(sink) = log.as_mut() {
            sink(&IterateLog { iteration: iterations, x: x.clone(), value: phi, grad_norm, step: last_step });
        }
        let finish = |status, x: Vec<f64>, eval: BarrierEvaluation| InnerResult {
            x,
            grad_norm,
            iterations,
            status,
            evaluation: eval,
        };
        if grad_norm <= opts.tol {
            return Ok(finish(InnerStatus::Converged, x, eval));
        }
        if iterations >= opts.max_iters {
            return Ok(finish(InnerStatus::MaxIters, x, eval));
        }
        let mut d = -&grad;
        if opts.method == InnerMethod::Newton {
            if let Some(nd) = newton_direction(p, mu, &x, &grad) {
                if nd.dot(&grad) < 0.0 {
                    d = nd;
                }
            }
        }
        let slope = d.dot(&grad);
        match line_search(p, mu, &x, phi, &d, slope) {
            StepOutcome::Accepted { x: next, t } => {
                let next_eval = barrier_eval(p, &next, mu)?;
                debug_assert!(next_eval.value.is_finite());
                x = next;
                eval = next_eval;
                iterations += 1;
                last_step = t * d.norm();
            }
            StepOutcome::Stall => return Ok(finish(InnerStatus::LineSearchStall, x, eval)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::builtin;

    fn opts(tol: f64, method: InnerMethod) -> InnerOptions {
        InnerOptions { tol, max_iters: DEFAULT_MAX_ITERS, method }
    }

    #[test]
    fn analytic_center_of_disk() {
        let p = builtin("disk").unwrap().problem.with_objective("0").unwrap();
        for mu in [0.01, 1.0, 10.0] {
            let r = solve_inner(&p, mu, &[0.3, 0.2], &opts(1e-6 * mu, InnerMethod::SteepestDescent), None).unwrap();
            assert_eq!(r.status, InnerStatus::Converged, "mu {mu}: {r:?}");
            assert!(r.x.iter().all(|v| v.abs() < 1e-6), "{:?}", r.x);
        }
    }

    #[test]
    fn disk_small_mu_approaches_projection() {
        let p = builtin("disk").unwrap().problem;
        for method in [InnerMethod::SteepestDescent, InnerMethod::Newton] {
            let r = solve_inner(&p, 1e-6, &[0.0, 0.0], &opts(1e-8, method), None).unwrap();
            let c = std::f64::consts::FRAC_1_SQRT_2;
            assert!((r.x[0] - c).abs() < 1e-3 && (r.x[1] - c).abs() < 1e-3, "{method:?} {:?}", r.x);
            assert!(p.min_constraint(&r.x).unwrap() > 0.0);
        }
    }

    #[test]
    fn cassini_converges_strictly_inside() {
        let p = builtin("cassini").unwrap().problem;
        let r = solve_inner(&p, 1.0, &[0.0, 0.0], &InnerOptions::for_mu(1.0), None).unwrap();
        assert_eq!(r.status, InnerStatus::Converged);
        assert!(r.grad_norm <= default_inner_tol(1.0));
        assert!(p.min_constraint(&r.x).unwrap() > 0.0);
    }

    #[test]
    fn infeasible_start_is_a_precondition_error() {
        let p = builtin("disk").unwrap().problem;
        let err = solve_inner(&p, 1.0, &[1.0, 0.0], &InnerOptions::for_mu(1.0), None).unwrap_err();
        assert_eq!(err, InnerError::NotStrictlyFeasible);
        let err = solve_inner(&p, 1.0, &[5.0, 0.0], &InnerOptions::for_mu(1.0), None).unwrap_err();
        assert_eq!(err, InnerError::NotStrictlyFeasible);
    }

    #[test]
    fn iterates_are_feasible_and_monotone() {
        let p = builtin("epsbox").unwrap().problem;
        for method in [InnerMethod::SteepestDescent, InnerMethod::Newton] {
            let mut log = Vec::new();
            let mut sink = |it: &IterateLog| log.push(it.clone());
            solve_inner(&p, 0.01, &[0.5, 0.5], &opts(1e-6, method), Some(&mut sink)).unwrap();
            assert!(log.len() > 1);
            for w in log.windows(2) {
                assert!(w[1].value < w[0].value);
            }
            for it in &log {
                assert!(p.min_constraint(&it.x).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn max_iters_is_reported() {
        let p = builtin("cassini").unwrap().problem;
        let o = InnerOptions { tol: 1e-14, max_iters: 3, method: InnerMethod::SteepestDescent };
        let r = solve_inner(&p, 1e-3, &[0.0, 0.0], &o, None).unwrap();
        assert_eq!(r.status, InnerStatus::MaxIters);
        assert_eq!(r.iterations, 3);
    }
}
