//! Problem instances: minimise `f` over `K = {x : g_j(x) >= 0, j = 1..m}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, Expr, ExprError};

/// Default tolerance below which a constraint counts as active.
pub const DEFAULT_ACTIVATION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot read problem file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("in {context}: {source}")]
    Expr {
        context: String,
        #[source]
        source: ExprError,
    },
    #[error("invalid problem: {0}")]
    Invalid(String),
}

/// On-disk problem description (JSON).
///
/// `params` are substituted into the expression texts as whole identifiers
/// before parsing, so `"x1/(epsilon + x2^2)"` with `epsilon = 0.001` becomes
/// `"x1/((0.001) + x2^2)"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub name: String,
    pub nvars: usize,
    pub objective: String,
    pub constraints: Vec<String>,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior_point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl ProblemFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("problem file serialises");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feasibility {
    StrictlyFeasible,
    Boundary,
    Infeasible,
}

/// Constraint indices (zero-based) considered active at a point.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActiveSet {
    pub indices: Vec<usize>,
}

impl ActiveSet {
    pub fn contains(&self, j: usize) -> bool {
        self.indices.contains(&j)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub nvars: usize,
    pub objective: Expr,
    pub constraints: Vec<Expr>,
    pub bounds: Vec<(f64, f64)>,
    pub interior_point: Option<Vec<f64>>,
    source: ProblemFile,
}

impl Problem {
    pub fn from_file(file: ProblemFile) -> Result<Problem, ProblemError> {
        let n = file.nvars;
        if n == 0 {
            return Err(ProblemError::Invalid("nvars must be positive".into()));
        }
        let params = file.params.clone().unwrap_or_default();
        let parse = |text: &str, context: String| {
            let text = substitute_params(text, &params);
            expr::parse(&text, n).map_err(|source| ProblemError::Expr { context, source })
        };
        let objective = parse(&file.objective, "objective".into())?;
        let constraints = file
            .constraints
            .iter()
            .enumerate()
            .map(|(j, t)| parse(t, format!("constraint g{}", j + 1)))
            .collect::<Result<Vec<_>, _>>()?;

        if file.bounds.len() != n {
            return Err(ProblemError::Invalid(format!("box has {} intervals, expected {n}", file.bounds.len())));
        }
        for (i, [lo, hi]) in file.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ProblemError::Invalid(format!("box interval {} is not lo < hi", i + 1)));
            }
        }
        let bounds: Vec<(f64, f64)> = file.bounds.iter().map(|b| (b[0], b[1])).collect();

        let problem = Problem {
            name: file.name.clone(),
            nvars: n,
            objective,
            constraints,
            bounds,
            interior_point: file.interior_point.clone(),
            source: file,
        };
        if let Some(x0) = &problem.interior_point {
            problem.validate_interior(x0)?;
        }
        Ok(problem)
    }

    pub fn from_json(text: &str) -> Result<Problem, ProblemError> {
        Problem::from_file(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Problem, ProblemError> {
        Problem::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn file(&self) -> &ProblemFile {
        &self.source
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Same problem with the objective replaced by `text`.
    pub fn with_objective(&self, text: &str) -> Result<Problem, ProblemError> {
        let mut file = self.source.clone();
        file.objective = text.to_string();
        Problem::from_file(file)
    }

    fn validate_interior(&self, x0: &[f64]) -> Result<(), ProblemError> {
        if x0.len() != self.nvars {
            return Err(ProblemError::Invalid("interior_point has wrong dimension".into()));
        }
        if !self.in_box_open(x0) {
            return Err(ProblemError::Invalid("interior_point is not strictly inside the box".into()));
        }
        let g = self
            .evaluate_constraints(x0)
            .map_err(|source| ProblemError::Expr { context: "interior_point".into(), source })?;
        if let Some(j) = g.iter().position(|&v| v <= 0.0) {
            return Err(ProblemError::Invalid(format!(
                "interior_point violates strict feasibility of g{} (value {})",
                j + 1,
                g[j]
            )));
        }
        Ok(())
    }

    pub fn in_box_open(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.bounds).all(|(v, (lo, hi))| lo < v && v < hi)
    }

    pub fn evaluate_constraints(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.constraints.iter().map(|g| g.eval(x)).collect()
    }

    /// `min_j g_j(x)`; `+inf` when there are no constraints.
    pub fn min_constraint(&self, x: &[f64]) -> Result<f64, ExprError> {
        Ok(self.evaluate_constraints(x)?.into_iter().fold(f64::INFINITY, f64::min))
    }

    pub fn feasibility(&self, x: &[f64], tol: f64) -> Result<Feasibility, ExprError> {
        let m = self.min_constraint(x)?;
        Ok(if m > tol {
            Feasibility::StrictlyFeasible
        } else if m.abs() <= tol {
            Feasibility::Boundary
        } else {
            Feasibility::Infeasible
        })
    }

    pub fn active_set(&self, x: &[f64], tol: f64) -> Result<ActiveSet, ExprError> {
        let g = self.evaluate_constraints(x)?;
        Ok(active_from_values(&g, tol))
    }
}

pub(crate) fn active_from_values(g: &[f64], tol: f64) -> ActiveSet {
    ActiveSet { indices: g.iter().enumerate().filter(|(_, &v)| v <= tol).map(|(j, _)| j).collect() }
}

/// Replaces whole identifiers that name a parameter with `(value)`.
pub fn substitute_params(text: &str, params: &BTreeMap<String, f64>) -> String {
    if params.is_empty() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut chars = text.char_indices().peekable();
    while let Some((start, c)) = chars.next() {
        if c.is_ascii_alphabetic() || c == '_' {
            let mut end = start + c.len_utf8();
            while let Some(&(i, d)) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '_' {
                    end = i + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let ident = &text[start..end];
            match params.get(ident) {
                Some(v) => {
                    out.push('(');
                    out.push_str(&v.to_string());
                    out.push(')');
                }
                None => out.push_str(ident),
            }
        } else if c.is_ascii_digit() || c == '.' {
            // numeric literal, possibly with an exponent marker that looks like an identifier
            out.push(c);
            while let Some(&(_, d)) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '.' {
                    out.push(d);
                    chars.next();
                } else {
                    break;
                }
            }
        } else {
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::builtin;

    fn p(name: &str) -> Problem {
        builtin(name).unwrap().problem
    }

    #[test]
    fn evaluate_constraints_examples() {
        assert_eq!(p("cassini").evaluate_constraints(&[0.0, 0.0]).unwrap(), vec![3.0]);
        assert_eq!(p("hyperbola").evaluate_constraints(&[1.0, 1.0]).unwrap(), vec![0.0, 1.0, 1.0, 9.0, 9.0]);
        assert_eq!(p("disk").evaluate_constraints(&[0.0, 0.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn feasibility_examples() {
        let disk = p("disk");
        assert_eq!(disk.feasibility(&[0.0, 0.0], 1e-9).unwrap(), Feasibility::StrictlyFeasible);
        assert_eq!(disk.feasibility(&[1.0, 0.0], 1e-9).unwrap(), Feasibility::Boundary);
        assert_eq!(disk.feasibility(&[2.0, 0.0], 1e-9).unwrap(), Feasibility::Infeasible);
    }

    #[test]
    fn active_set_examples() {
        assert_eq!(p("hyperbola").active_set(&[1.0, 1.0], 1e-6).unwrap().indices, vec![0]);
        assert_eq!(p("epsbox").active_set(&[0.0, 1.0], 1e-6).unwrap().indices, vec![0, 3]);
        assert!(p("disk").active_set(&[0.0, 0.0], 1e-6).unwrap().is_empty());
    }

    #[test]
    fn params_substitute_whole_identifiers() {
        let params: BTreeMap<String, f64> =
            [("a".to_string(), 2.0), ("epsilon".to_string(), 0.001)].into_iter().collect();
        assert_eq!(
            substitute_params("a - x1 + x1/(epsilon+x2^2) + 1e-3 + exp(a)", &params),
            "(2) - x1 + x1/((0.001)+x2^2) + 1e-3 + exp((2))"
        );
    }

    fn file() -> ProblemFile {
        ProblemFile {
            name: "t".into(),
            nvars: 2,
            objective: "x1".into(),
            constraints: vec!["1 - x1^2 - x2^2".into()],
            bounds: vec![[-2.0, 2.0], [-2.0, 2.0]],
            interior_point: Some(vec![0.0, 0.0]),
            params: None,
            notes: None,
        }
    }

    #[test]
    fn load_validation() {
        assert!(Problem::from_file(file()).is_ok());

        let mut f = file();
        f.bounds[1] = [1.0, 1.0];
        assert!(matches!(Problem::from_file(f), Err(ProblemError::Invalid(_))));

        let mut f = file();
        f.interior_point = Some(vec![0.9, 0.9]);
        assert!(matches!(Problem::from_file(f), Err(ProblemError::Invalid(_))));

        let mut f = file();
        f.constraints.push("x3".into());
        assert!(matches!(Problem::from_file(f), Err(ProblemError::Expr { .. })));

        let mut f = file();
        f.bounds.pop();
        assert!(matches!(Problem::from_file(f), Err(ProblemError::Invalid(_))));

        assert!(matches!(Problem::from_json("{\"name\": 1}"), Err(ProblemError::Json(_))));
    }

    #[test]
    fn json_round_trip() {
        let f = file();
        let back: ProblemFile = serde_json::from_str(&f.to_json()).unwrap();
        assert_eq!(back, f);
    }
}
