//! Sampling probes for the hypotheses behind the barrier method and for the
//! structure of the corpus sets.
//!
//! All probes are one-sided: a reported violation always comes with a witness
//! that re-evaluates to the violation, while "pass" only means that no violation
//! was found among the samples. Randomness comes from one seeded ChaCha stream
//! per call, so reports are reproducible.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::barrier_hessian;
use crate::grid::BoxGrid;
use crate::problem::Problem;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SLATER_RES: usize = 101;
pub const DEFAULT_RAYS: usize = 256;
pub const DEFAULT_DELTA: f64 = 1e-6;
pub const DEFAULT_PAIRS: usize = 10_000;
pub const DEFAULT_PHI_SAMPLES: usize = 1000;
/// Boundary points are accepted when `|min_j g_j| <= BOUNDARY_TOL`.
pub const BOUNDARY_TOL: f64 = 1e-10;
pub const BISECTION_ITERS: usize = 60;
/// Tangential curvature above this on a convex set is reported as a violation.
pub const CURVATURE_TOL: f64 = 1e-6;

const SLATER_POLISH_STEPS: usize = 50;
const SMOOTH_MIN_SHARPNESS: f64 = 100.0;
/// Resolution of the deterministic candidate grid used by the level-set probe.
const LEVELSET_GRID_RES: usize = 65;
const LEVELSET_ALL_PAIRS_MAX: usize = 64;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("Slater point not found: best grid margin min_j g_j = {0}")]
    SlaterUnverified(f64),
    #[error("no strictly feasible samples found in the box")]
    NoFeasibleSamples,
    #[error("level vector has {got} entries, expected {expected}")]
    LevelDimension { expected: usize, got: usize },
    #[error("constraint index {0} out of range")]
    BadConstraint(usize),
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn min_g(p: &Problem, x: &[f64]) -> Option<f64> {
    p.min_constraint(x).ok()
}

fn uniform_in_box(p: &Problem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    p.bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect()
}

// ---------------------------------------------------------------------------
// Slater point

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaterPoint {
    pub x: Vec<f64>,
    /// `min_j g_j(x)`, always positive.
    pub margin: f64,
}

/// `-(1/k) ln sum_j exp(-k g_j)` and its gradient.
fn smooth_min(p: &Problem, x: &[f64]) -> Option<(f64, DVector<f64>)> {
    let duals: Vec<_> = p.constraints.iter().map(|g| g.eval_dual(x)).collect::<Result<_, _>>().ok()?;
    let lo = duals.iter().map(|d| d.value).fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = duals.iter().map(|d| (-SMOOTH_MIN_SHARPNESS * (d.value - lo)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let value = lo - total.ln() / SMOOTH_MIN_SHARPNESS;
    let mut grad = DVector::zeros(p.nvars);
    for (d, w) in duals.iter().zip(&weights) {
        grad += &d.gradient * (w / total);
    }
    Some((value, grad))
}

/// Maximises `min_j g_j` on a `res^n` box grid, then polishes by steepest ascent
/// on a smooth minimum. Never returns a point with nonpositive margin.
pub fn slater_find(p: &Problem, res: usize) -> Result<SlaterPoint, DiagnosticsError> {
    let res = res.max(2);
    if p.constraints.is_empty() {
        let x = p.bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
        return Ok(SlaterPoint { x, margin: f64::INFINITY });
    }
    let grid = BoxGrid::new(&p.bounds, res);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for i in 0..grid.len() {
        let x = grid.point(i);
        if let Some(m) = min_g(p, &x) {
            if best.as_ref().is_none_or(|(_, bm)| m > *bm) {
                best = Some((x, m));
            }
        }
    }
    let (mut x, mut margin) = best.ok_or(DiagnosticsError::SlaterUnverified(f64::NEG_INFINITY))?;
    if margin <= 0.0 {
        return Err(DiagnosticsError::SlaterUnverified(margin));
    }

    let mut cur = x.clone();
    let mut step = grid.spacing();
    for _ in 0..SLATER_POLISH_STEPS {
        let Some((s, grad)) = smooth_min(p, &cur) else { break };
        let gn = grad.norm();
        if gn == 0.0 {
            break;
        }
        let mut moved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = cur.iter().zip(grad.iter()).map(|(c, g)| c + step * g / gn).collect();
            let inside = trial.iter().zip(&p.bounds).all(|(v, (lo, hi))| lo <= v && v <= hi);
            if inside {
                if let Some((st, _)) = smooth_min(p, &trial) {
                    if st > s {
                        cur = trial;
                        moved = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
        if let Some(m) = min_g(p, &cur) {
            if m > margin {
                margin = m;
                x = cur.clone();
            }
        }
        step *= 2.0;
    }
    Ok(SlaterPoint { x, margin })
}

/// The problem's declared interior point, or a grid-found Slater point.
pub fn slater_point(p: &Problem) -> Result<SlaterPoint, DiagnosticsError> {
    match &p.interior_point {
        Some(x) => Ok(SlaterPoint { x: x.clone(), margin: min_g(p, x).unwrap_or(f64::NAN) }),
        None => slater_find(p, DEFAULT_SLATER_RES),
    }
}

// ---------------------------------------------------------------------------
// Boundary sampling

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPoint {
    pub x: Vec<f64>,
    pub g: Vec<f64>,
}

impl BoundaryPoint {
    /// Constraints with `g_j <= BOUNDARY_TOL`.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.g.iter().enumerate().filter(|(_, &v)| v <= BOUNDARY_TOL).map(|(j, _)| j)
    }
}

fn random_direction(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let d: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return d.into_iter().map(|v| v / norm).collect();
        }
    }
}

fn ray_exit(p: &Problem, x0: &[f64], d: &[f64]) -> f64 {
    x0.iter()
        .zip(d)
        .zip(&p.bounds)
        .filter_map(|((&x, &di), &(lo, hi))| {
            if di > 0.0 {
                Some((hi - x) / di)
            } else if di < 0.0 {
                Some((lo - x) / di)
            } else {
                None
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Casts `rays` random rays from the strictly feasible `x0` to the box surface and
/// bisects each to a point of the boundary of `K`. Rays leaving the box inside
/// `K` contribute nothing.
pub fn boundary_points(p: &Problem, x0: &[f64], rays: usize, seed: u64) -> Vec<BoundaryPoint> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for _ in 0..rays {
        let d = random_direction(p.nvars, &mut rng);
        let at = |t: f64| -> Vec<f64> { x0.iter().zip(&d).map(|(x, di)| x + t * di).collect() };
        let t_max = ray_exit(p, x0, &d);
        let end = at(t_max);
        let end_g = min_g(p, &end);
        let x = match end_g {
            Some(m) if m.abs() <= BOUNDARY_TOL => end,
            Some(m) if m > 0.0 => continue,
            _ => {
                let (mut lo, mut hi) = (0.0, t_max);
                for _ in 0..BISECTION_ITERS {
                    let mid = 0.5 * (lo + hi);
                    match min_g(p, &at(mid)) {
                        Some(m) if m > 0.0 => lo = mid,
                        _ => hi = mid,
                    }
                }
                at(lo)
            }
        };
        let Ok(g) = p.evaluate_constraints(&x) else { continue };
        let m = g.iter().copied().fold(f64::INFINITY, f64::min);
        if m.abs() <= BOUNDARY_TOL {
            out.push(BoundaryPoint { x, g });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Nondegeneracy

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeStatus {
    Pass,
    Fail,
    NoActiveSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyEntry {
    /// Zero-based constraint index.
    pub constraint: usize,
    pub samples: usize,
    pub min_gradient_norm: Option<f64>,
    pub witness: Option<Vec<f64>>,
    pub status: ProbeStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub delta: f64,
    pub rays: usize,
    pub boundary_points: usize,
    pub entries: Vec<NondegeneracyEntry>,
}

impl NondegeneracyReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.status != ProbeStatus::Fail)
    }
}

/// Checks `||grad g_j|| >= delta` at sampled boundary points where `g_j` is active.
pub fn nondegeneracy_probe(p: &Problem, x0: &[f64], rays: usize, delta: f64, seed: u64) -> NondegeneracyReport {
    let pts = boundary_points(p, x0, rays, seed);
    let mut entries: Vec<NondegeneracyEntry> = (0..p.num_constraints())
        .map(|j| NondegeneracyEntry {
            constraint: j,
            samples: 0,
            min_gradient_norm: None,
            witness: None,
            status: ProbeStatus::NoActiveSamples,
        })
        .collect();
    for b in &pts {
        for j in b.active() {
            let Ok(d) = p.constraints[j].eval_dual(&b.x) else { continue };
            let norm = d.gradient.norm();
            let e = &mut entries[j];
            e.samples += 1;
            if e.min_gradient_norm.is_none_or(|m| norm < m) {
                e.min_gradient_norm = Some(norm);
                e.witness = Some(b.x.clone());
            }
        }
    }
    for e in &mut entries {
        if let Some(m) = e.min_gradient_norm {
            e.status = if m >= delta { ProbeStatus::Pass } else { ProbeStatus::Fail };
        }
    }
    NondegeneracyReport { delta, rays, boundary_points: pts.len(), entries }
}

// ---------------------------------------------------------------------------
// Level-set convexity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum LevelsetOutcome {
    ConvexUpToSampling {
        pairs_tested: usize,
    },
    /// `x` and `y` lie in `K_a`, `midpoint = (x + y) / 2` does not. `g_*` are the
    /// values of the probed constraints.
    Counterexample {
        x: Vec<f64>,
        y: Vec<f64>,
        midpoint: Vec<f64>,
        g_x: Vec<f64>,
        g_y: Vec<f64>,
        g_midpoint: Vec<f64>,
    },
    EmptyRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelsetReport {
    /// Probed constraint (zero-based), or `None` for all constraints.
    pub constraint: Option<usize>,
    pub levels: Vec<f64>,
    #[serde(flatten)]
    pub outcome: LevelsetOutcome,
}

struct LevelSet<'a> {
    p: &'a Problem,
    indices: Vec<usize>,
    levels: Vec<f64>,
}

impl LevelSet<'_> {
    fn values(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.indices.iter().map(|&j| self.p.constraints[j].eval(x).ok()).collect()
    }

    fn contains_values(&self, g: &[f64]) -> bool {
        g.iter().zip(&self.levels).all(|(v, a)| v >= a)
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.values(x).is_some_and(|g| self.contains_values(&g))
    }

    fn test_pair(&self, x: &[f64], y: &[f64]) -> Option<LevelsetOutcome> {
        let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
        let g_mid = self.values(&mid);
        if g_mid.as_ref().is_some_and(|g| self.contains_values(g)) {
            return None;
        }
        // midpoints where a constraint cannot be evaluated are outside every level set,
        // but they make poor witnesses; skip them
        let g_mid = g_mid?;
        Some(LevelsetOutcome::Counterexample {
            x: x.to_vec(),
            y: y.to_vec(),
            midpoint: mid,
            g_x: self.values(x)?,
            g_y: self.values(y)?,
            g_midpoint: g_mid,
        })
    }
}

/// Midpoint test of `K_a = {x : g_j(x) >= a_j}` inside the box.
///
/// `constraint = Some(j)` probes `g_j` alone with `levels = [a]`; `None` probes all
/// constraints, with either one level per constraint or one shared level. Pairs
/// are drawn first from the members of a fixed `65^n` box grid (all pairs when
/// there are few members, which catches level sets of measure zero) and then by
/// seeded rejection sampling of `pairs` uniform pairs.
pub fn levelset_convexity_probe(
    p: &Problem,
    constraint: Option<usize>,
    levels: &[f64],
    pairs: usize,
    seed: u64,
) -> Result<LevelsetReport, DiagnosticsError> {
    let m = p.num_constraints();
    let indices: Vec<usize> = match constraint {
        Some(j) if j >= m => return Err(DiagnosticsError::BadConstraint(j)),
        Some(j) => vec![j],
        None => (0..m).collect(),
    };
    let levels: Vec<f64> = match levels.len() {
        1 => vec![levels[0]; indices.len()],
        k if k == indices.len() => levels.to_vec(),
        k => return Err(DiagnosticsError::LevelDimension { expected: indices.len(), got: k }),
    };
    let set = LevelSet { p, indices, levels };
    let report = |outcome| LevelsetReport { constraint, levels: set.levels.clone(), outcome };
    let mut rng = rng(seed);

    let grid = BoxGrid::new(&p.bounds, LEVELSET_GRID_RES);
    let members: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.point(i)).filter(|x| set.contains(x)).collect();
    let mut tested = 0;
    if members.len() >= 2 {
        if members.len() <= LEVELSET_ALL_PAIRS_MAX {
            for i in 0..members.len() {
                for k in i + 1..members.len() {
                    tested += 1;
                    if let Some(c) = set.test_pair(&members[i], &members[k]) {
                        return Ok(report(c));
                    }
                }
            }
        } else {
            for _ in 0..pairs {
                let i = rng.random_range(0..members.len());
                let k = rng.random_range(0..members.len());
                tested += 1;
                if let Some(c) = set.test_pair(&members[i], &members[k]) {
                    return Ok(report(c));
                }
            }
        }
    }

    let max_draws = 100 * pairs + 10_000;
    let mut draws = 0;
    let mut sample = |rng: &mut ChaCha8Rng| -> Option<Vec<f64>> {
        while draws < max_draws {
            draws += 1;
            let x = uniform_in_box(p, rng);
            if set.contains(&x) {
                return Some(x);
            }
        }
        None
    };
    let mut sampled = 0;
    for _ in 0..pairs {
        let Some(x) = sample(&mut rng) else { break };
        let Some(y) = sample(&mut rng) else { break };
        sampled += 1;
        tested += 1;
        if let Some(c) = set.test_pair(&x, &y) {
            return Ok(report(c));
        }
    }
    if members.len() < 2 && sampled == 0 {
        return Ok(report(LevelsetOutcome::EmptyRegion));
    }
    Ok(report(LevelsetOutcome::ConvexUpToSampling { pairs_tested: tested }))
}

// ---------------------------------------------------------------------------
// Barrier convexity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiConvexityReport {
    pub mu: f64,
    pub samples: usize,
    pub min_eigenvalue: f64,
    pub witness: Vec<f64>,
}

pub fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(h.clone()).eigenvalues.min()
}

/// Smallest barrier-Hessian eigenvalue over `samples` strictly feasible points.
pub fn phi_convexity_probe(
    p: &Problem,
    mu: f64,
    samples: usize,
    seed: u64,
) -> Result<PhiConvexityReport, DiagnosticsError> {
    let mut rng = rng(seed);
    let max_draws = 1000 * samples.max(1);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut used = 0;
    let mut draws = 0;
    while used < samples && draws < max_draws {
        draws += 1;
        let x = uniform_in_box(p, &mut rng);
        if !min_g(p, &x).is_some_and(|m| m > 0.0) {
            continue;
        }
        let Ok(h) = barrier_hessian(p, &x, mu) else { continue };
        used += 1;
        let e = min_eigenvalue(&h);
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, x));
        }
    }
    let (min_eigenvalue, witness) = best.ok_or(DiagnosticsError::NoFeasibleSamples)?;
    Ok(PhiConvexityReport { mu, samples: used, min_eigenvalue, witness })
}

// ---------------------------------------------------------------------------
// Tangential curvature

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEntry {
    pub constraint: usize,
    pub samples: usize,
    pub max_tangential_curvature: Option<f64>,
    pub witness: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CurvatureReport {
    /// One variable: the tangent space of a boundary point is `{0}`.
    Vacuous,
    Sampled {
        boundary_points: usize,
        entries: Vec<CurvatureEntry>,
    },
}

impl CurvatureReport {
    pub fn max_curvature(&self) -> Option<f64> {
        match self {
            CurvatureReport::Vacuous => None,
            CurvatureReport::Sampled { entries, .. } => {
                entries.iter().filter_map(|e| e.max_tangential_curvature).reduce(f64::max)
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.max_curvature().is_none_or(|c| c <= CURVATURE_TOL)
    }
}

/// Orthonormal basis (as columns) of the complement of `normal`.
pub fn tangent_basis(normal: &DVector<f64>) -> DMatrix<f64> {
    let n = normal.len();
    let u = normal / normal.norm();
    let mut basis: Vec<DVector<f64>> = vec![u];
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let mut w = DVector::zeros(n);
        w[i] = 1.0;
        for b in &basis {
            let c = b.dot(&w);
            w -= b * c;
        }
        let norm = w.norm();
        if norm > 1e-8 {
            basis.push(w / norm);
        }
    }
    DMatrix::from_columns(&basis[1..])
}

/// Largest eigenvalue of `H[g_j]` restricted to the tangent space `grad g_j^perp`
/// at sampled boundary points. For convex `K` with nondegenerate `g_j` this is
/// nonpositive wherever `g_j` is active.
pub fn tangential_curvature_probe(p: &Problem, x0: &[f64], boundary_samples: usize, seed: u64) -> CurvatureReport {
    if p.nvars == 1 {
        return CurvatureReport::Vacuous;
    }
    let pts = boundary_points(p, x0, boundary_samples, seed);
    let mut entries: Vec<CurvatureEntry> = (0..p.num_constraints())
        .map(|j| CurvatureEntry { constraint: j, samples: 0, max_tangential_curvature: None, witness: None })
        .collect();
    for b in &pts {
        for j in b.active() {
            let Ok(d) = p.constraints[j].eval_dual(&b.x) else { continue };
            if d.gradient.norm() == 0.0 {
                continue;
            }
            let t = tangent_basis(&d.gradient);
            let projected = t.transpose() * &d.hessian * &t;
            let top = SymmetricEigen::new(projected).eigenvalues.max();
            let e = &mut entries[j];
            e.samples += 1;
            if e.max_tangential_curvature.is_none_or(|c| top > c) {
                e.max_tangential_curvature = Some(top);
                e.witness = Some(b.x.clone());
            }
        }
    }
    CurvatureReport::Sampled { boundary_points: pts.len(), entries }
}

/// All probe outcomes for one problem.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub slater: Option<Result<SlaterPoint, String>>,
    pub nondegeneracy: Option<NondegeneracyReport>,
    pub levelset: Vec<LevelsetReport>,
    pub phi_convexity: Vec<PhiConvexityReport>,
    pub tangential_curvature: Option<CurvatureReport>,
}

impl DiagnosticsReport {
    /// Slater point found and nondegeneracy probe passed.
    pub fn assumptions_verified(&self) -> bool {
        matches!(self.slater, Some(Ok(_))) && self.nondegeneracy.as_ref().is_some_and(|n| n.passed())
    }
}

/// Runs the Slater search and the nondegeneracy probe with default settings.
pub fn check_assumptions(p: &Problem, seed: u64) -> DiagnosticsReport {
    let mut report = DiagnosticsReport::default();
    match slater_point(p) {
        Ok(s) => {
            report.nondegeneracy = Some(nondegeneracy_probe(p, &s.x, DEFAULT_RAYS, DEFAULT_DELTA, seed));
            report.slater = Some(Ok(s));
        }
        Err(e) => report.slater = Some(Err(e.to_string())),
    }
    report
}
