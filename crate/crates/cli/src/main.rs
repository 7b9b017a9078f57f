use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_FAILURE: u8 = 3;

/// Log-barrier continuation solver with KKT certificates and hypothesis diagnostics.
#[derive(Debug, Parser)]
#[command(name = "logbar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Built-in problem (see `logbar list`).
    #[arg(long)]
    pub builtin: Option<String>,
    /// Problem file in JSON format.
    #[arg(long)]
    pub problem: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Common {
    #[command(flatten)]
    pub source: Source,
    /// Seed for every randomised probe.
    #[arg(long, default_value_t = logbar::diagnostics::DEFAULT_SEED)]
    pub seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run barrier continuation and write the path trace and final certificate.
    Solve(SolveArgs),
    /// Run hypothesis and convexity probes.
    Diagnose(DiagnoseArgs),
    /// Sample a constraint on a grid over the box (CSV: x1,x2,g).
    Contour(ContourArgs),
    /// Brute-force grid minimisation with polish.
    Oracle(OracleArgs),
    /// List the built-in problems.
    List(ListArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 1.0)]
    pub mu0: f64,
    #[arg(long, default_value_t = 0.2)]
    pub mu_factor: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub mu_min: f64,
    /// Fixed inner gradient tolerance (default max(1e-8, 1e-2 mu)).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Shifted-Newton inner steps (the default).
    #[arg(long, conflicts_with = "steepest_descent")]
    pub newton: bool,
    /// Plain steepest-descent inner steps.
    #[arg(long)]
    pub steepest_descent: bool,
    /// Refuse to solve unless the Slater and nondegeneracy probes pass.
    #[arg(long)]
    pub require_assumptions: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Expect {
    /// Some level-set probe found a counterexample.
    Nonconvex,
    /// Some barrier-Hessian probe found a negative eigenvalue.
    Indefinite,
    /// Every selected check passed and no nonconvexity was found.
    Pass,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated checks: slater, nondegeneracy, levelset:A, phiconvexity:MU, curvature.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub check: Vec<String>,
    #[arg(long, value_enum)]
    pub expect: Option<Expect>,
    /// Constraint probed by levelset checks (1-based); all constraints when omitted.
    #[arg(long)]
    pub constraint: Option<usize>,
    #[arg(long, default_value_t = logbar::diagnostics::DEFAULT_PAIRS)]
    pub pairs: usize,
    #[arg(long, default_value_t = logbar::diagnostics::DEFAULT_PHI_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = logbar::diagnostics::DEFAULT_RAYS)]
    pub rays: usize,
}

#[derive(Debug, Args)]
pub struct ContourArgs {
    #[command(flatten)]
    pub common: Common,
    /// Level values, written to `<out>.levels`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub levels: Vec<f64>,
    #[arg(long, default_value_t = 400)]
    pub res: usize,
    /// Sampled constraint (1-based).
    #[arg(long, default_value_t = 1)]
    pub constraint: usize,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 2049)]
    pub res: usize,
    #[arg(long, default_value_t = 200)]
    pub polish: usize,
}

#[derive(Debug, Args)]
pub struct ListArgs {
    /// Write every builtin as `<name>.json` into this directory.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
        Command::Contour(a) => commands::contour(&a),
        Command::Oracle(a) => commands::oracle(&a),
        Command::List(a) => commands::list(&a),
    };
    ExitCode::from(code)
}
