//! Built-in problem instances.
//!
//! `cassini`, `hyperbola` and `epsbox` are convex feasible sets described by
//! non-concave constraint functions; `disk` and `degenerate-disk` are controls.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::problem::{Problem, ProblemFile};

pub const BUILTIN_NAMES: [&str; 5] = ["cassini", "hyperbola", "epsbox", "disk", "degenerate-disk"];

#[derive(Debug, Error)]
#[error("unknown builtin problem `{0}` (expected one of: cassini, hyperbola, epsbox, disk, degenerate-disk)")]
pub struct UnknownBuiltin(pub String);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnownOptimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub provenance: &'static str,
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub problem: Problem,
    pub provenance: &'static str,
    pub known_optimum: Option<KnownOptimum>,
}

fn square_box(lo: f64, hi: f64) -> Vec<[f64; 2]> {
    vec![[lo, hi], [lo, hi]]
}

/// The problem file for a builtin, exactly as shipped under `data/`.
pub fn builtin_file(name: &str) -> Result<ProblemFile, UnknownBuiltin> {
    let disk_objective = "(x1 - 1)^2 + (x2 - 1)^2";
    let file = match name {
        "cassini" => ProblemFile {
            name: name.into(),
            nvars: 2,
            objective: "x1 + x2".into(),
            constraints: vec!["4 - ((x1 + 1)^2 + x2^2)*((x1 - 1)^2 + x2^2)".into()],
            bounds: square_box(-2.0, 2.0),
            interior_point: Some(vec![0.0, 0.0]),
            params: None,
            notes: Some(
                "Cassini-oval family: {g >= a} is convex only for a <= 0. The linear objective is a choice of this corpus."
                    .into(),
            ),
        },
        "hyperbola" => ProblemFile {
            name: name.into(),
            nvars: 2,
            objective: "x1 + x2".into(),
            constraints: vec![
                "x1*x2 - 1".into(),
                "x1".into(),
                "x2".into(),
                "10 - x1".into(),
                "10 - x2".into(),
            ],
            bounds: square_box(0.01, 10.0),
            interior_point: Some(vec![2.0, 2.0]),
            params: None,
            notes: Some(
                "Log-concave but non-concave representation. The unbounded set is compactified by the added constraints 10 - x1 >= 0 and 10 - x2 >= 0."
                    .into(),
            ),
        },
        "epsbox" => ProblemFile {
            name: name.into(),
            nvars: 2,
            objective: "x1 - x2".into(),
            constraints: vec![
                "x1/(epsilon + x2^2)".into(),
                "a - x1".into(),
                "x2".into(),
                "b - x2".into(),
            ],
            bounds: square_box(0.0, 1.0),
            interior_point: Some(vec![0.5, 0.5]),
            params: Some(
                [("a".to_string(), 1.0), ("b".to_string(), 1.0), ("epsilon".to_string(), 0.001)]
                    .into_iter()
                    .collect::<BTreeMap<_, _>>(),
            ),
            notes: Some(
                "g1 is not log-concave; with a linear objective the barrier is nonconvex for every mu > 0. The linear objective is a choice of this corpus."
                    .into(),
            ),
        },
        "disk" => ProblemFile {
            name: name.into(),
            nvars: 2,
            objective: disk_objective.into(),
            constraints: vec!["1 - x1^2 - x2^2".into()],
            bounds: square_box(-1.5, 1.5),
            interior_point: Some(vec![0.0, 0.0]),
            params: None,
            notes: Some("Concave representation of the unit disk (control).".into()),
        },
        "degenerate-disk" => ProblemFile {
            name: name.into(),
            nvars: 2,
            objective: disk_objective.into(),
            constraints: vec!["(1 - x1^2 - x2^2)^3".into()],
            bounds: square_box(-1.5, 1.5),
            interior_point: Some(vec![0.0, 0.0]),
            params: None,
            notes: Some("Unit disk with a vanishing boundary gradient (nondegeneracy control).".into()),
        },
        other => return Err(UnknownBuiltin(other.to_string())),
    };
    Ok(file)
}

pub fn builtin(name: &str) -> Result<CorpusEntry, UnknownBuiltin> {
    let file = builtin_file(name)?;
    let problem = Problem::from_file(file).expect("builtin problems are valid");
    let (provenance, known_optimum) = match name {
        "cassini" => ("oval set with non-quasiconcave defining function; objective chosen for the corpus", None),
        "hyperbola" => (
            "region above x1*x2 = 1 in the positive orthant, box-compactified",
            Some(KnownOptimum { x: vec![1.0, 1.0], f: 2.0, provenance: "analytic KKT point, lambda = 1" }),
        ),
        "epsbox" => (
            "unit box described through x1/(eps + x2^2) >= 0; objective chosen for the corpus",
            Some(KnownOptimum { x: vec![0.0, 1.0], f: -1.0, provenance: "linear objective on the unit box" }),
        ),
        "disk" | "degenerate-disk" => {
            let c = std::f64::consts::FRAC_1_SQRT_2;
            (
                if name == "disk" { "concave-representation control" } else { "nondegeneracy-failure control" },
                Some(KnownOptimum {
                    x: vec![c, c],
                    f: 3.0 - 2.0 * std::f64::consts::SQRT_2,
                    provenance: "projection of (1, 1) onto the unit disk",
                }),
            )
        }
        _ => unreachable!(),
    };
    Ok(CorpusEntry { problem, provenance, known_optimum })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cassini_has_one_constraint() {
        assert_eq!(builtin("cassini").unwrap().problem.num_constraints(), 1);
    }

    #[test]
    fn hyperbola_known_optimum() {
        let k = builtin("hyperbola").unwrap().known_optimum.unwrap();
        assert_eq!((k.x, k.f), (vec![1.0, 1.0], 2.0));
    }

    #[test]
    fn unknown_name() {
        assert!(builtin("nosuch").is_err());
    }

    #[test]
    fn epsbox_params_are_applied() {
        let p = builtin("epsbox").unwrap().problem;
        let g = p.evaluate_constraints(&[0.5, 0.0]).unwrap();
        assert!((g[0] - 500.0).abs() < 1e-9);
        assert_eq!(&g[1..], &[0.5, 0.0, 1.0]);
    }

    #[test]
    fn known_optima_are_feasible() {
        for name in BUILTIN_NAMES {
            let e = builtin(name).unwrap();
            if let Some(k) = &e.known_optimum {
                assert!(e.problem.min_constraint(&k.x).unwrap() >= -1e-12, "{name}");
                let f = e.problem.objective.eval(&k.x).unwrap();
                assert!((f - k.f).abs() < 1e-12, "{name}");
            }
        }
    }
}
