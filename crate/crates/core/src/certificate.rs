//! KKT residuals at a candidate `(x, lambda)` and the resulting optimality verdict.
//!
//! For a convex `f` over a convex `K` whose representation satisfies Slater's
//! condition and the nondegeneracy condition, a KKT point is a global minimiser
//! whether or not the `g_j` are concave. The verdict below only certifies the KKT
//! conditions numerically; the report ties it to the assumptions.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::lagrangian_gradient;
use crate::expr::ExprError;
use crate::problem::{active_from_values, ActiveSet, Problem};

/// Multipliers with magnitude below this are treated as exact zeros.
pub const LAMBDA_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktTolerances {
    pub stationarity: f64,
    pub complementarity: f64,
    pub feasibility: f64,
    pub dual: f64,
    /// `||grad f||` at or below this means an unconstrained minimum of `f`.
    pub gradient: f64,
    pub activation: f64,
}

impl Default for KktTolerances {
    fn default() -> Self {
        KktTolerances {
            stationarity: 1e-5,
            complementarity: 1e-5,
            feasibility: 1e-8,
            dual: 0.0,
            gradient: 1e-7,
            activation: crate::problem::DEFAULT_ACTIVATION_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    KktPoint,
    UnconstrainedMinimum,
    NotCertified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub objective_value: f64,
    pub objective_gradient_norm: f64,
    pub stationarity_residual: f64,
    pub complementarity_residual: f64,
    pub dual_feasibility_violation: f64,
    pub primal_feasibility_violation: f64,
    pub active_set: ActiveSet,
    pub verdict: Verdict,
    pub tolerances: KktTolerances,
}

#[derive(Debug, Error, PartialEq)]
pub enum CertificateError {
    #[error("lambda has {got} entries, problem has {expected} constraints")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

pub fn check_kkt(
    p: &Problem,
    x: &[f64],
    lambda: &[f64],
    tols: &KktTolerances,
) -> Result<KktCertificate, CertificateError> {
    let m = p.num_constraints();
    if lambda.len() != m {
        return Err(CertificateError::DimensionMismatch { expected: m, got: lambda.len() });
    }
    if x.len() != p.nvars {
        return Err(ExprError::DimensionMismatch { expected: p.nvars, got: x.len() }.into());
    }
    let lambda: Vec<f64> = lambda.iter().map(|&l| if l.abs() < LAMBDA_CLAMP { 0.0 } else { l }).collect();
    let f = p.objective.eval_dual(x)?;
    let mut g = Vec::with_capacity(m);
    let mut grads: Vec<DVector<f64>> = Vec::with_capacity(m);
    for c in &p.constraints {
        let d = c.eval_dual(x)?;
        g.push(d.value);
        grads.push(d.gradient);
    }

    let stationarity_residual = lagrangian_gradient(&f.gradient, &grads, &lambda).norm();
    let complementarity_residual = g.iter().zip(&lambda).map(|(gj, lj)| (gj * lj).abs()).fold(0.0, f64::max);
    let dual_feasibility_violation = lambda.iter().filter(|&&l| l < 0.0).fold(0.0f64, |acc, &l| acc.max(-l));
    let primal_feasibility_violation = g.iter().filter(|&&v| v < 0.0).fold(0.0f64, |acc, &v| acc.max(-v));
    let objective_gradient_norm = f.gradient.norm();

    let primal_ok = primal_feasibility_violation <= tols.feasibility;
    let verdict = if primal_ok && objective_gradient_norm <= tols.gradient {
        Verdict::UnconstrainedMinimum
    } else if primal_ok
        && stationarity_residual <= tols.stationarity
        && complementarity_residual <= tols.complementarity
        && dual_feasibility_violation <= tols.dual
    {
        Verdict::KktPoint
    } else {
        Verdict::NotCertified
    };

    Ok(KktCertificate {
        x: x.to_vec(),
        lambda,
        objective_value: f.value,
        objective_gradient_norm,
        stationarity_residual,
        complementarity_residual,
        dual_feasibility_violation,
        primal_feasibility_violation,
        active_set: active_from_values(&g, tols.activation),
        verdict,
        tolerances: *tols,
    })
}

impl KktCertificate {
    /// Name and value of the residual that exceeds its tolerance by the largest factor.
    pub fn worst_residual(&self) -> (&'static str, f64) {
        let t = &self.tolerances;
        let entries = [
            ("stationarity", self.stationarity_residual, t.stationarity),
            ("complementarity", self.complementarity_residual, t.complementarity),
            ("dual feasibility", self.dual_feasibility_violation, t.dual),
            ("primal feasibility", self.primal_feasibility_violation, t.feasibility),
        ];
        let ratio = |v: f64, tol: f64| {
            if v <= tol {
                0.0
            } else if tol > 0.0 {
                v / tol
            } else {
                f64::INFINITY
            }
        };
        let mut worst = entries[0];
        for e in &entries[1..] {
            if ratio(e.1, e.2) > ratio(worst.1, worst.2) {
                worst = *e;
            }
        }
        (worst.0, worst.1)
    }
}

/// Human-readable conclusion for a certificate.
///
/// `assumptions_verified` should be true only when a Slater point was found and
/// the sampled nondegeneracy probe passed.
pub fn global_optimality_statement(cert: &KktCertificate, assumptions_verified: bool) -> String {
    let x = format!("{:?}", cert.x);
    match cert.verdict {
        Verdict::NotCertified => {
            let (name, value) = cert.worst_residual();
            format!("not certified: {name} residual {value:e} exceeds its tolerance at x = {x}")
        }
        v if !assumptions_verified => {
            let what = if v == Verdict::KktPoint { "KKT point" } else { "unconstrained minimum of f" };
            format!(
                "{what} at x = {x}, but global optimality is not established: the Slater and nondegeneracy hypotheses are unverified for this representation"
            )
        }
        Verdict::KktPoint => format!(
            "global minimizer: x = {x} is a KKT point with f = {}; under Slater and nondegeneracy of the representation, KKT points of a convex f on convex K are global minimizers",
            cert.objective_value
        ),
        Verdict::UnconstrainedMinimum => format!(
            "global minimizer: grad f(x) = 0 at feasible x = {x} with f = {}; a stationary point of convex f is a global minimizer",
            cert.objective_value
        ),
    }
}
