use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use logbar::certificate::{global_optimality_statement, Verdict};
use logbar::continuation::{solve as continuation_solve, ContinuationOptions, MuSchedule, SolveError};
use logbar::corpus::{builtin, builtin_file, BUILTIN_NAMES};
use logbar::diagnostics::{
    check_assumptions, levelset_convexity_probe, nondegeneracy_probe, phi_convexity_probe, slater_point,
    tangential_curvature_probe, DiagnosticsReport, LevelsetOutcome, DEFAULT_DELTA,
};
use logbar::grid::BoxGrid;
use logbar::inner::InnerMethod;
use logbar::oracle::{grid_minimize, OracleError, OracleResult};
use logbar::records::trace_to_jsonl;
use logbar::Problem;
use serde::Serialize;

use crate::{ContourArgs, DiagnoseArgs, Expect, ListArgs, OracleArgs, SolveArgs, Source, EXIT_FAILURE, EXIT_INPUT};

/// Barrier-Hessian eigenvalues above this count as positive semidefinite.
pub const PSD_FLOOR: f64 = -1e-8;

struct Failure {
    code: u8,
    stage: &'static str,
    message: String,
}

fn input(stage: &'static str, message: impl ToString) -> Failure {
    Failure { code: EXIT_INPUT, stage, message: message.to_string() }
}

fn failed(stage: &'static str, message: impl ToString) -> Failure {
    Failure { code: EXIT_FAILURE, stage, message: message.to_string() }
}

fn finish(result: Result<(), Failure>) -> u8 {
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}: {}", f.stage, f.message);
            f.code
        }
    }
}

fn load(source: &Source) -> Result<Problem, Failure> {
    match (&source.builtin, &source.problem) {
        (Some(name), None) => builtin(name).map(|e| e.problem).map_err(|e| input("load", e)),
        (None, Some(path)) => Problem::load(path).map_err(|e| input("load", format!("{}: {e}", path.display()))),
        _ => Err(input("load", "give exactly one of --builtin and --problem")),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| input("write", format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| input("write", e)),
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialises");
    s.push('\n');
    s
}

pub fn solve(a: &SolveArgs) -> u8 {
    finish(run_solve(a))
}

fn run_solve(a: &SolveArgs) -> Result<(), Failure> {
    let p = load(&a.common.source)?;
    let assumptions = check_assumptions(&p, a.common.seed);
    let verified = assumptions.assumptions_verified();
    if a.require_assumptions && !verified {
        return Err(failed("assumptions", assumption_failure(&assumptions)));
    }
    let opts = ContinuationOptions {
        schedule: MuSchedule { mu0: a.mu0, factor: a.mu_factor, mu_min: a.mu_min },
        method: if a.steepest_descent { InnerMethod::SteepestDescent } else { InnerMethod::Newton },
        inner_tol: a.tol,
        ..ContinuationOptions::default()
    };
    if let Some(tol) = a.tol {
        if tol.is_nan() || tol <= 0.0 {
            return Err(input("options", format!("--tol must be positive, got {tol}")));
        }
    }
    let trace = continuation_solve(&p, &opts, None, None).map_err(|e| match e {
        SolveError::BadSchedule(_) => input("options", e),
        SolveError::NoStartPoint(_) | SolveError::StartNotStrictlyFeasible => failed("start point", e),
        _ => failed("continuation", e),
    })?;
    let cert = &trace.final_certificate;
    let report = global_optimality_statement(cert, verified);
    emit(a.common.out.as_deref(), &trace_to_jsonl(&trace, Some(report.clone())))?;
    if cert.verdict == Verdict::NotCertified {
        return Err(failed("certificate", report));
    }
    Ok(())
}

fn assumption_failure(report: &DiagnosticsReport) -> String {
    if let Some(Err(e)) = &report.slater {
        return format!("Slater probe failed: {e}");
    }
    let mut msg = String::from("nondegeneracy probe failed");
    if let Some(n) = &report.nondegeneracy {
        for e in n.entries.iter().filter(|e| e.min_gradient_norm.is_some_and(|m| m < n.delta)) {
            let _ = write!(
                msg,
                "; constraint {} has gradient norm {:e} < {:e} at {:?}",
                e.constraint + 1,
                e.min_gradient_norm.unwrap_or(f64::NAN),
                n.delta,
                e.witness.as_deref().unwrap_or(&[])
            );
        }
    }
    msg
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Check {
    Slater,
    Nondegeneracy,
    Levelset(f64),
    PhiConvexity(f64),
    Curvature,
}

fn parse_check(text: &str) -> Result<Check, Failure> {
    let number = |name: &str, v: &str| -> Result<f64, Failure> {
        v.trim().parse().map_err(|_| input("options", format!("check `{name}` needs a number, got `{v}`")))
    };
    match text.trim().split_once(':') {
        None => match text.trim() {
            "slater" => Ok(Check::Slater),
            "nondegeneracy" => Ok(Check::Nondegeneracy),
            "curvature" => Ok(Check::Curvature),
            other => Err(input("options", format!("unknown check `{other}`"))),
        },
        Some(("levelset", v)) => Ok(Check::Levelset(number("levelset", v)?)),
        Some(("phiconvexity", v)) => {
            let mu = number("phiconvexity", v)?;
            if mu.is_nan() || mu <= 0.0 {
                return Err(input("options", format!("phiconvexity needs mu > 0, got {mu}")));
            }
            Ok(Check::PhiConvexity(mu))
        }
        Some(_) => Err(input("options", format!("unknown check `{text}`"))),
    }
}

#[derive(Debug, Serialize)]
struct DiagnoseOutput<'a> {
    problem: &'a str,
    seed: u64,
    checks: Vec<String>,
    report: DiagnosticsReport,
    passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    expect: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expectation_met: Option<bool>,
}

pub fn diagnose(a: &DiagnoseArgs) -> u8 {
    finish(run_diagnose(a))
}

fn run_diagnose(a: &DiagnoseArgs) -> Result<(), Failure> {
    let names: Vec<String> = if a.check.is_empty() {
        vec!["slater".into(), "nondegeneracy".into(), "curvature".into()]
    } else {
        a.check.iter().map(|s| s.trim().to_string()).collect()
    };
    let checks = names.iter().map(|s| parse_check(s)).collect::<Result<Vec<_>, _>>()?;
    let p = load(&a.common.source)?;
    let constraint = match a.constraint {
        Some(0) => return Err(input("options", "--constraint is 1-based")),
        Some(j) if j > p.num_constraints() => {
            return Err(input("options", format!("--constraint {j} but the problem has {}", p.num_constraints())))
        }
        c => c.map(|j| j - 1),
    };
    let seed = a.common.seed;
    let anchor = slater_point(&p);
    let mut report = DiagnosticsReport::default();
    let mut passed = true;
    for check in &checks {
        match *check {
            Check::Slater => {
                passed &= anchor.is_ok();
                report.slater = Some(anchor.clone().map_err(|e| e.to_string()));
            }
            Check::Nondegeneracy => match &anchor {
                Ok(s) => {
                    let n = nondegeneracy_probe(&p, &s.x, a.rays, DEFAULT_DELTA, seed);
                    passed &= n.passed();
                    report.nondegeneracy = Some(n);
                }
                Err(e) => {
                    passed = false;
                    report.slater = Some(Err(e.to_string()));
                }
            },
            Check::Curvature => match &anchor {
                Ok(s) => {
                    let c = tangential_curvature_probe(&p, &s.x, a.rays, seed);
                    passed &= c.passed();
                    report.tangential_curvature = Some(c);
                }
                Err(e) => {
                    passed = false;
                    report.slater = Some(Err(e.to_string()));
                }
            },
            Check::Levelset(level) => {
                let r = levelset_convexity_probe(&p, constraint, &[level], a.pairs, seed)
                    .map_err(|e| input("levelset", e))?;
                report.levelset.push(r);
            }
            Check::PhiConvexity(mu) => {
                let r = phi_convexity_probe(&p, mu, a.samples, seed).map_err(|e| failed("phiconvexity", e))?;
                report.phi_convexity.push(r);
            }
        }
    }
    let nonconvex = report.levelset.iter().any(|r| matches!(r.outcome, LevelsetOutcome::Counterexample { .. }));
    let indefinite = report.phi_convexity.iter().any(|r| r.min_eigenvalue < PSD_FLOOR);
    let expectation_met = a.expect.map(|e| match e {
        Expect::Nonconvex => nonconvex,
        Expect::Indefinite => indefinite,
        Expect::Pass => passed && !nonconvex && !indefinite,
    });
    let out = DiagnoseOutput {
        problem: &p.name,
        seed,
        checks: names,
        report,
        passed,
        expect: a.expect.map(|e| match e {
            Expect::Nonconvex => "nonconvex",
            Expect::Indefinite => "indefinite",
            Expect::Pass => "pass",
        }),
        expectation_met,
    };
    emit(a.common.out.as_deref(), &pretty(&out))?;
    match expectation_met {
        Some(false) => Err(failed("diagnose", format!("expectation `{}` not met", out.expect.unwrap_or("")))),
        Some(true) => Ok(()),
        None if passed => Ok(()),
        None => Err(failed("diagnose", "a selected check failed")),
    }
}

pub fn contour(a: &ContourArgs) -> u8 {
    finish(run_contour(a))
}

fn levels_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(".levels");
    PathBuf::from(s)
}

fn run_contour(a: &ContourArgs) -> Result<(), Failure> {
    if a.res < 2 {
        return Err(input("options", format!("--res must be at least 2, got {}", a.res)));
    }
    let p = load(&a.common.source)?;
    if p.nvars != 2 {
        return Err(input("contour", format!("contour needs a 2-variable problem, `{}` has {}", p.name, p.nvars)));
    }
    if a.constraint == 0 || a.constraint > p.num_constraints() {
        return Err(input(
            "options",
            format!("--constraint {} out of range 1..={}", a.constraint, p.num_constraints()),
        ));
    }
    let g = &p.constraints[a.constraint - 1];
    let grid = BoxGrid::new(&p.bounds, a.res);
    let mut csv = String::with_capacity(grid.len() * 48);
    csv.push_str("x1,x2,g\n");
    for i in 0..grid.len() {
        let x = grid.point(i);
        let v = g.eval(&x).unwrap_or(f64::NAN);
        let _ = writeln!(csv, "{},{},{}", x[0], x[1], v);
    }
    emit(a.common.out.as_deref(), &csv)?;
    if let Some(out) = &a.common.out {
        let text: String = a.levels.iter().map(|l| format!("{l}\n")).collect();
        let path = levels_path(out);
        fs::write(&path, text).map_err(|e| input("write", format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct OracleOutput<'a> {
    problem: &'a str,
    #[serde(flatten)]
    result: OracleResult,
}

pub fn oracle(a: &OracleArgs) -> u8 {
    finish(run_oracle(a))
}

fn run_oracle(a: &OracleArgs) -> Result<(), Failure> {
    let p = load(&a.common.source)?;
    let result = grid_minimize(&p, a.res, a.polish).map_err(|e| match e {
        OracleError::TooManyVariables(_) | OracleError::ResolutionTooSmall(_) => input("options", e),
        _ => failed("oracle", e),
    })?;
    emit(a.common.out.as_deref(), &pretty(&OracleOutput { problem: &p.name, result }))
}

pub fn list(a: &ListArgs) -> u8 {
    finish(run_list(a))
}

fn run_list(a: &ListArgs) -> Result<(), Failure> {
    let mut text = String::new();
    for name in BUILTIN_NAMES {
        let entry = builtin(name).expect("builtin names resolve");
        let _ = writeln!(text, "{name}\t{}", entry.provenance);
    }
    if let Some(dir) = &a.export {
        fs::create_dir_all(dir).map_err(|e| input("write", format!("{}: {e}", dir.display())))?;
        for name in BUILTIN_NAMES {
            let path = dir.join(format!("{name}.json"));
            let json = builtin_file(name).expect("builtin names resolve").to_json();
            fs::write(&path, json).map_err(|e| input("write", format!("{}: {e}", path.display())))?;
        }
    }
    emit(None, &text)
}
