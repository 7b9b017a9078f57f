//! Independent reference answers: brute-force grid minimisation over the box
//! followed by a barrier-free local polish, and finite-difference gradient checks.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::slater_point;
use crate::expr::{Expr, ExprError};
use crate::grid::BoxGrid;
use crate::problem::Problem;

pub const MAX_ORACLE_VARS: usize = 3;
pub const MIN_ORACLE_RES: usize = 11;
const RETRACTION_ITERS: usize = 60;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("oracle supports at most {MAX_ORACLE_VARS} variables, problem has {0}")]
    TooManyVariables(usize),
    #[error("grid resolution must be at least {MIN_ORACLE_RES}, got {0}")]
    ResolutionTooSmall(usize),
    #[error("no feasible grid point")]
    NoFeasiblePoint,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    /// Best grid point before polishing.
    pub x_grid: Vec<f64>,
    pub f_grid: f64,
    pub grid_resolution: usize,
    pub polished: bool,
}

fn feasible(p: &Problem, x: &[f64]) -> bool {
    p.min_constraint(x).is_ok_and(|m| m >= 0.0)
}

/// Pulls an infeasible `y` back towards the strictly feasible `anchor` until it
/// lies in `K` (bisection on the segment; `K` convex makes this well defined).
fn retract(p: &Problem, anchor: &[f64], y: &[f64]) -> Vec<f64> {
    let at = |s: f64| -> Vec<f64> { anchor.iter().zip(y).map(|(a, b)| a + s * (b - a)).collect() };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..RETRACTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if feasible(p, &at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

/// `grad` with its component along the inward normal of the most nearly active
/// constraint removed, when that component points out of `K`.
fn tangential(p: &Problem, x: &[f64], grad: &DVector<f64>) -> Option<DVector<f64>> {
    let g = p.evaluate_constraints(x).ok()?;
    let j = (0..g.len()).min_by(|&a, &b| g[a].total_cmp(&g[b]))?;
    let normal = p.constraints[j].eval_dual(x).ok()?.gradient;
    let nn = normal.norm();
    if nn == 0.0 {
        return None;
    }
    let n = normal / nn;
    let c = grad.dot(&n);
    (c > 0.0).then(|| grad - n * c)
}

/// Descent on `f` over `K` without a barrier: from the current point try a step
/// along `-grad f` and one along its tangential part, pulling infeasible trials
/// back into `K`; only decreasing moves are accepted.
fn polish(p: &Problem, start: Vec<f64>, f_start: f64, steps: usize, initial_step: f64) -> (Vec<f64>, f64) {
    let anchor = match slater_point(p) {
        Ok(s) => s.x,
        Err(_) => return (start, f_start),
    };
    let (mut x, mut fx) = (start, f_start);
    let mut t = initial_step;
    for _ in 0..steps {
        let Ok(d) = p.objective.eval_dual(&x) else { break };
        if d.gradient.norm() == 0.0 || t < 1e-15 {
            break;
        }
        let mut directions = vec![d.gradient.clone()];
        directions.extend(tangential(p, &x, &d.gradient));
        let mut best: Option<(Vec<f64>, f64)> = None;
        for dir in directions {
            let norm = dir.norm();
            if norm == 0.0 {
                continue;
            }
            let y: Vec<f64> = x.iter().zip(dir.iter()).map(|(xi, di)| xi - t * di / norm).collect();
            let z = if feasible(p, &y) { y } else { retract(p, &anchor, &y) };
            if let Ok(fz) = p.objective.eval(&z) {
                if fz < best.as_ref().map_or(fx, |b| b.1) && feasible(p, &z) {
                    best = Some((z, fz));
                }
            }
        }
        match best {
            Some((z, fz)) => {
                x = z;
                fx = fz;
                t *= 2.0;
            }
            None => t *= 0.5,
        }
    }
    (x, fx)
}

pub fn grid_minimize(p: &Problem, res: usize, polish_steps: usize) -> Result<OracleResult, OracleError> {
    if p.nvars > MAX_ORACLE_VARS {
        return Err(OracleError::TooManyVariables(p.nvars));
    }
    if res < MIN_ORACLE_RES {
        return Err(OracleError::ResolutionTooSmall(res));
    }
    let grid = BoxGrid::new(&p.bounds, res);
    // ties resolve to the lowest grid index, i.e. lexicographically smallest point
    let best = (0..grid.len())
        .into_par_iter()
        .filter_map(|i| {
            let x = grid.point(i);
            if !feasible(p, &x) {
                return None;
            }
            p.objective.eval(&x).ok().map(|f| (f, i))
        })
        .reduce_with(|a, b| if (b.0, b.1) < (a.0, a.1) { b } else { a });
    let (f_grid, index) = best.ok_or(OracleError::NoFeasiblePoint)?;
    let x_grid = grid.point(index);
    let (x_best, f_best) = if polish_steps > 0 {
        polish(p, x_grid.clone(), f_grid, polish_steps, grid.spacing())
    } else {
        (x_grid.clone(), f_grid)
    };
    Ok(OracleResult { x_best, f_best, x_grid, f_grid, grid_resolution: res, polished: polish_steps > 0 })
}

/// Worst componentwise error between the dual-number gradient and central
/// differences, relative to `max(1, |derivative|)`.
pub fn gradient_check(e: &Expr, x: &[f64], step: f64) -> Result<f64, ExprError> {
    let exact = e.eval_dual(x)?.gradient;
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += step;
        xm[i] -= step;
        let fd = (e.eval(&xp)? - e.eval(&xm)?) / (2.0 * step);
        worst = worst.max((exact[i] - fd).abs() / exact[i].abs().max(1.0));
    }
    Ok(worst)
}
