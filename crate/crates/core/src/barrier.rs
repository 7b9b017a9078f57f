//! The log-barrier `phi_mu(x) = f(x) - mu * sum_j ln g_j(x)` and its derivatives.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expr::{Dual2, ExprError};
use crate::problem::Problem;

#[derive(Debug, Error, PartialEq)]
pub enum BarrierError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("point is not strictly feasible (min g = {0})")]
    NotStrictlyFeasible(f64),
}

/// Barrier value; `Infinite` marks points outside the strict interior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BarrierValue {
    Finite(f64),
    Infinite,
}

impl BarrierValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            BarrierValue::Finite(v) => Some(v),
            BarrierValue::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, BarrierValue::Finite(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEvaluation {
    pub mu: f64,
    pub value: BarrierValue,
    /// Present exactly when `value` is finite.
    pub gradient: Option<DVector<f64>>,
    pub constraint_values: Vec<f64>,
    /// `mu / g_j(x)`; empty when `value` is infinite.
    pub multipliers: Vec<f64>,
}

/// `grad_f - sum_j lambda_j grad_g_j`, accumulated in constraint order.
pub fn lagrangian_gradient(grad_f: &DVector<f64>, grads_g: &[DVector<f64>], lambda: &[f64]) -> DVector<f64> {
    let mut out = grad_f.clone();
    for (g, &l) in grads_g.iter().zip(lambda) {
        out -= g * l;
    }
    out
}

fn log_sum(values: &[f64]) -> f64 {
    values.iter().map(|g| g.ln()).sum()
}

/// Barrier value only; `Infinite` outside the strict interior.
pub fn barrier_value(p: &Problem, x: &[f64], mu: f64) -> Result<BarrierValue, ExprError> {
    let g = p.evaluate_constraints(x)?;
    if g.iter().any(|&v| v <= 0.0) {
        return Ok(BarrierValue::Infinite);
    }
    Ok(BarrierValue::Finite(p.objective.eval(x)? - mu * log_sum(&g)))
}

pub fn barrier_eval(p: &Problem, x: &[f64], mu: f64) -> Result<BarrierEvaluation, ExprError> {
    let g = p.evaluate_constraints(x)?;
    if g.iter().any(|&v| v <= 0.0) {
        return Ok(BarrierEvaluation {
            mu,
            value: BarrierValue::Infinite,
            gradient: None,
            constraint_values: g,
            multipliers: Vec::new(),
        });
    }
    let f = p.objective.eval_dual(x)?;
    let grads: Vec<DVector<f64>> =
        p.constraints.iter().map(|c| c.eval_dual(x).map(|d| d.gradient)).collect::<Result<_, _>>()?;
    let multipliers: Vec<f64> = g.iter().map(|&v| mu / v).collect();
    let gradient = lagrangian_gradient(&f.gradient, &grads, &multipliers);
    Ok(BarrierEvaluation {
        mu,
        value: BarrierValue::Finite(f.value - mu * log_sum(&g)),
        gradient: Some(gradient),
        constraint_values: g,
        multipliers,
    })
}

/// `H[f] + sum_j (mu/g_j^2) grad g_j grad g_j^T - (mu/g_j) H[g_j]`.
pub fn barrier_hessian(p: &Problem, x: &[f64], mu: f64) -> Result<DMatrix<f64>, BarrierError> {
    let duals: Vec<Dual2> = p.constraints.iter().map(|c| c.eval_dual(x)).collect::<Result<_, _>>()?;
    let min_g = duals.iter().map(|d| d.value).fold(f64::INFINITY, f64::min);
    if min_g <= 0.0 {
        return Err(BarrierError::NotStrictlyFeasible(min_g));
    }
    let mut h = p.objective.eval_dual(x)?.hessian;
    for d in &duals {
        let g = d.value;
        h += (&d.gradient * d.gradient.transpose()) * (mu / (g * g)) - &d.hessian * (mu / g);
    }
    Ok(h)
}
