use logbar::corpus::{builtin, BUILTIN_NAMES};
use logbar::diagnostics::{
    check_assumptions, levelset_convexity_probe, nondegeneracy_probe, phi_convexity_probe, slater_find,
    tangential_curvature_probe, LevelsetOutcome, ProbeStatus, DEFAULT_DELTA, DEFAULT_PAIRS, DEFAULT_RAYS, DEFAULT_SEED,
    DEFAULT_SLATER_RES,
};
use logbar::Problem;

fn problem(name: &str) -> Problem {
    builtin(name).unwrap().problem
}

fn start(p: &Problem) -> Vec<f64> {
    p.interior_point.clone().unwrap()
}

#[test]
fn cassini_level_sets() {
    let p = problem("cassini");
    let g = &p.constraints[0];
    for a in [2.95, 2.5, 1.5, 4.0] {
        let r = levelset_convexity_probe(&p, Some(0), &[a], DEFAULT_PAIRS, DEFAULT_SEED).unwrap();
        match r.outcome {
            LevelsetOutcome::Counterexample { x, y, midpoint, .. } => {
                assert!(g.eval(&x).unwrap() >= a && g.eval(&y).unwrap() >= a, "a = {a}");
                assert!(g.eval(&midpoint).unwrap() < a, "a = {a}");
            }
            other => panic!("a = {a}: {other:?}"),
        }
    }
    for a in [0.0, -2.0] {
        let r = levelset_convexity_probe(&p, Some(0), &[a], DEFAULT_PAIRS, DEFAULT_SEED).unwrap();
        assert!(
            matches!(r.outcome, LevelsetOutcome::ConvexUpToSampling { pairs_tested } if pairs_tested >= DEFAULT_PAIRS),
            "a = {a}: {r:?}"
        );
    }
}

#[test]
fn empty_level_set_is_reported() {
    let p = problem("cassini");
    let r = levelset_convexity_probe(&p, Some(0), &[4.5], 100, DEFAULT_SEED).unwrap();
    assert_eq!(r.outcome, LevelsetOutcome::EmptyRegion);
}

#[test]
fn probes_are_deterministic_in_the_seed() {
    let p = problem("cassini");
    let a = levelset_convexity_probe(&p, None, &[1.5], 1000, 7).unwrap();
    let b = levelset_convexity_probe(&p, None, &[1.5], 1000, 7).unwrap();
    assert_eq!(a, b);
    let e = problem("epsbox");
    assert_eq!(phi_convexity_probe(&e, 1.0, 200, 3).unwrap(), phi_convexity_probe(&e, 1.0, 200, 3).unwrap());
    assert_eq!(
        nondegeneracy_probe(&p, &start(&p), 64, DEFAULT_DELTA, 5),
        nondegeneracy_probe(&p, &start(&p), 64, DEFAULT_DELTA, 5)
    );
}

#[test]
fn nondegeneracy_over_the_corpus() {
    for name in BUILTIN_NAMES {
        let p = problem(name);
        let r = nondegeneracy_probe(&p, &start(&p), DEFAULT_RAYS, DEFAULT_DELTA, DEFAULT_SEED);
        if name == "degenerate-disk" {
            assert!(!r.passed());
            let e = &r.entries[0];
            assert_eq!(e.status, ProbeStatus::Fail);
            assert!(e.min_gradient_norm.unwrap() <= 1e-4);
        } else {
            assert!(r.passed(), "{name}: {r:?}");
            for e in r.entries.iter().filter(|e| e.samples > 0) {
                assert!(e.min_gradient_norm.unwrap() >= DEFAULT_DELTA);
            }
        }
    }
    assert!(!check_assumptions(&problem("degenerate-disk"), DEFAULT_SEED).assumptions_verified());
    assert!(check_assumptions(&problem("cassini"), DEFAULT_SEED).assumptions_verified());
}

#[test]
fn every_builtin_has_a_slater_point() {
    for name in BUILTIN_NAMES {
        let s = slater_find(&problem(name), DEFAULT_SLATER_RES).unwrap();
        assert!(s.margin > 0.0, "{name}");
    }
}

#[test]
fn barrier_convexity_by_representation() {
    let r = phi_convexity_probe(&problem("epsbox"), 1.0, 1000, DEFAULT_SEED).unwrap();
    assert!(r.min_eigenvalue < 0.0, "{r:?}");
    let g = problem("epsbox").evaluate_constraints(&r.witness).unwrap();
    assert!(g.iter().all(|&v| v > 0.0));
    for name in ["disk", "hyperbola"] {
        for mu in [1.0, 1e-2] {
            let r = phi_convexity_probe(&problem(name), mu, 1000, DEFAULT_SEED).unwrap();
            assert!(r.min_eigenvalue >= -1e-8, "{name} mu {mu}: {r:?}");
        }
    }
}

#[test]
fn cassini_boundary_curves_inward() {
    let p = problem("cassini");
    let r = tangential_curvature_probe(&p, &start(&p), DEFAULT_RAYS, DEFAULT_SEED);
    assert!(r.passed());
    assert!(r.max_curvature().unwrap() <= 1e-6);
}
