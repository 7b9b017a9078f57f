//! Line-delimited JSON records shared by solve traces and certificates.
//!
//! Every line is one object tagged by `"record"`; path points and the final
//! certificate use the same field names (`x`, `multipliers`, `objective`,
//! `grad_norm`, `status`) so a single reader handles both.

use serde::{Deserialize, Serialize};

use crate::certificate::{KktCertificate, Verdict};
use crate::continuation::{PathPoint, SolveTrace};
use crate::inner::InnerStatus;
use crate::problem::ActiveSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Path {
        mu: f64,
        x: Vec<f64>,
        multipliers: Vec<f64>,
        objective: f64,
        grad_norm: f64,
        status: InnerStatus,
        iterations: usize,
    },
    Certificate {
        mu: f64,
        x: Vec<f64>,
        multipliers: Vec<f64>,
        objective: f64,
        /// Stationarity residual of the certificate.
        grad_norm: f64,
        status: Verdict,
        complementarity_residual: f64,
        dual_feasibility_violation: f64,
        primal_feasibility_violation: f64,
        active_set: ActiveSet,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        report: Option<String>,
    },
}

impl From<&PathPoint> for TraceRecord {
    fn from(p: &PathPoint) -> Self {
        TraceRecord::Path {
            mu: p.mu,
            x: p.x.clone(),
            multipliers: p.multipliers.clone(),
            objective: p.objective,
            grad_norm: p.inner_grad_norm,
            status: p.inner_status,
            iterations: p.inner_iterations,
        }
    }
}

impl TraceRecord {
    pub fn certificate(mu: f64, c: &KktCertificate, report: Option<String>) -> TraceRecord {
        TraceRecord::Certificate {
            mu,
            x: c.x.clone(),
            multipliers: c.lambda.clone(),
            objective: c.objective_value,
            grad_norm: c.stationarity_residual,
            status: c.verdict,
            complementarity_residual: c.complementarity_residual,
            dual_feasibility_violation: c.dual_feasibility_violation,
            primal_feasibility_violation: c.primal_feasibility_violation,
            active_set: c.active_set.clone(),
            report,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialise")
    }
}

/// All path records followed by the certificate record, one per line.
pub fn trace_to_jsonl(trace: &SolveTrace, report: Option<String>) -> String {
    let mut out = String::new();
    for p in &trace.points {
        out.push_str(&TraceRecord::from(p).to_line());
        out.push('\n');
    }
    let mu = trace.points.last().map_or(f64::NAN, |p| p.mu);
    out.push_str(&TraceRecord::certificate(mu, &trace.final_certificate, report).to_line());
    out.push('\n');
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}
