//! Log-barrier continuation for convex feasible sets given by possibly
//! non-concave constraint functions, with KKT certificates, hypothesis
//! diagnostics and a brute-force reference oracle.
//!
//! ```
//! use logbar::{continuation, corpus};
//!
//! let problem = corpus::builtin("hyperbola").unwrap().problem;
//! let trace = continuation::solve(&problem, &Default::default(), None, None).unwrap();
//! let cert = &trace.final_certificate;
//! assert!((cert.objective_value - 2.0).abs() < 1e-4);
//! ```

pub mod barrier;
pub mod certificate;
pub mod continuation;
pub mod corpus;
pub mod diagnostics;
pub mod expr;
pub mod grid;
pub mod inner;
pub mod oracle;
pub mod problem;
pub mod records;

pub use certificate::{KktCertificate, KktTolerances, Verdict};
pub use continuation::{ContinuationOptions, MuSchedule, PathPoint, SolveTrace};
pub use expr::{Dual2, Expr, ExprError};
pub use problem::{ActiveSet, Feasibility, Problem, ProblemFile};
