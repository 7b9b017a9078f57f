use logbar::barrier::{barrier_eval, barrier_value, lagrangian_gradient, BarrierValue};
use logbar::certificate::{check_kkt, KktTolerances};
use logbar::corpus::{builtin, BUILTIN_NAMES};
use logbar::expr::{BinaryOp, Node, UnaryOp};
use logbar::{Expr, Feasibility, Problem};
use nalgebra::DVector;
use proptest::prelude::*;

const H: f64 = 1e-5;

fn leaf() -> impl Strategy<Value = Node> {
    prop_oneof![(0u32..40).prop_map(|k| Node::Const(f64::from(k) / 8.0)), (0usize..2).prop_map(Node::Var),]
}

/// Random smooth trees; divisions and logarithms only see arguments bounded below by 1.
fn tree() -> impl Strategy<Value = Node> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        let positive =
            inner.clone().prop_map(|a| Node::binary(BinaryOp::Add, Node::Const(1.0), Node::Pow(Box::new(a), 2)));
        prop_oneof![
            inner.clone().prop_map(|a| Node::unary(UnaryOp::Neg, a)),
            inner.clone().prop_map(|a| Node::unary(UnaryOp::Exp, Node::unary(UnaryOp::Neg, Node::Pow(Box::new(a), 2)))),
            positive.clone().prop_map(|a| Node::unary(UnaryOp::Ln, a)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::binary(BinaryOp::Add, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::binary(BinaryOp::Sub, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Node::binary(BinaryOp::Mul, a, b)),
            (inner.clone(), positive).prop_map(|(a, b)| Node::binary(BinaryOp::Div, a, b)),
            (inner, -2i32..4).prop_map(|(a, k)| Node::Pow(Box::new(a), k)),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 2)
}

fn shifted(x: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[i] += h;
    y
}

fn close(a: f64, b: f64, rel: f64, scale: f64) -> bool {
    (a - b).abs() <= rel * scale.max(a.abs()).max(1.0)
}

fn problem(name: &str) -> Problem {
    builtin(name).unwrap().problem
}

/// Uniform box point, accepted only if strictly feasible.
fn interior_point(p: &Problem, u: &[f64]) -> Option<Vec<f64>> {
    let x: Vec<f64> = p.bounds.iter().zip(u).map(|(&(lo, hi), t)| lo + (hi - lo) * t).collect();
    (p.min_constraint(&x).ok()? > 1e-6).then_some(x)
}

/// First-order estimate `min_j g_j / ||grad g_j||` of the distance to the boundary.
fn boundary_distance(p: &Problem, x: &[f64]) -> f64 {
    p.constraints
        .iter()
        .map(|g| {
            let d = g.eval_dual(x).unwrap();
            d.value / d.gradient.norm()
        })
        .fold(f64::INFINITY, f64::min)
}

fn unit_pair() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dual_gradient_matches_central_differences(node in tree(), x in point()) {
        let e = Expr::from_node(node, 2).unwrap();
        let Ok(d) = e.eval_dual(&x) else { return Ok(()) };
        for i in 0..2 {
            let (Ok(fp), Ok(fm)) = (e.eval(&shifted(&x, i, H)), e.eval(&shifted(&x, i, -H))) else { return Ok(()) };
            let fd = (fp - fm) / (2.0 * H);
            prop_assert!(close(d.gradient[i], fd, 1e-5, d.value.abs()), "{e}: {} vs {fd}", d.gradient[i]);
        }
    }

    #[test]
    fn dual_hessian_matches_differenced_gradient(node in tree(), x in point()) {
        let e = Expr::from_node(node, 2).unwrap();
        let Ok(d) = e.eval_dual(&x) else { return Ok(()) };
        prop_assert!((d.hessian.clone() - d.hessian.transpose()).amax() == 0.0);
        for i in 0..2 {
            let (Ok(dp), Ok(dm)) = (e.eval_dual(&shifted(&x, i, H)), e.eval_dual(&shifted(&x, i, -H))) else { return Ok(()) };
            for k in 0..2 {
                let fd = (dp.gradient[k] - dm.gradient[k]) / (2.0 * H);
                let scale = d.gradient.amax().max(d.value.abs());
                prop_assert!(close(d.hessian[(k, i)], fd, 1e-5, scale), "{e}: H[{k},{i}] {} vs {fd}", d.hessian[(k, i)]);
            }
        }
    }

    #[test]
    fn display_round_trips(node in tree(), x in point()) {
        let e = Expr::from_node(node, 2).unwrap();
        let text = e.to_string();
        let back = Expr::parse(&text, 2).unwrap();
        prop_assert_eq!(back.root(), e.root());
        prop_assert_eq!(back.to_string(), text);
        if let Ok(v) = e.eval(&x) {
            prop_assert_eq!(back.eval(&x).unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn log_hessian_identity(node in tree(), x in point()) {
        // g^2 H[ln g] = g H[g] - grad g grad g^T wherever g > 0
        let e = Expr::from_node(node, 2).unwrap();
        let Ok(d) = e.eval_dual(&x) else { return Ok(()) };
        prop_assume!(d.value > 1e-3);
        let l = e.ln().eval_dual(&x).unwrap();
        let lhs = l.hessian * (d.value * d.value);
        let rhs = &d.hessian * d.value - &d.gradient * d.gradient.transpose();
        let scale = rhs.amax().max(1.0);
        prop_assert!((lhs - rhs).amax() <= 1e-8 * scale);
    }

    #[test]
    fn feasibility_is_monotone_in_tol(u in unit_pair(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0, k in 0usize..5) {
        let p = problem(BUILTIN_NAMES[k]);
        let x: Vec<f64> = p.bounds.iter().zip(&u).map(|(&(lo, hi), t)| lo + (hi - lo) * t).collect();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let at_lo = p.feasibility(&x, lo).unwrap();
        let at_hi = p.feasibility(&x, hi).unwrap();
        prop_assert!(!(at_lo == Feasibility::Infeasible && at_hi == Feasibility::StrictlyFeasible));
        if at_hi == Feasibility::StrictlyFeasible {
            prop_assert!(p.active_set(&x, hi).unwrap().is_empty());
        }
    }

    #[test]
    fn barrier_gradient_and_multipliers(u in unit_pair(), k in 0usize..5, mu_exp in -6i32..1) {
        let p = problem(BUILTIN_NAMES[k]);
        let Some(x) = interior_point(&p, &u) else { return Ok(()) };
        let mu = 10f64.powi(mu_exp);
        let ev = barrier_eval(&p, &x, mu).unwrap();
        let grad = ev.gradient.clone().unwrap();
        for i in 0..2 {
            let h = 1e-4 * boundary_distance(&p, &x).min(1.0);
            let phi = |y: &[f64]| match barrier_value(&p, y, mu).unwrap() {
                BarrierValue::Finite(v) => v,
                BarrierValue::Infinite => f64::NAN,
            };
            let fd = (phi(&shifted(&x, i, h)) - phi(&shifted(&x, i, -h))) / (2.0 * h);
            prop_assert!(close(grad[i], fd, 1e-5, grad.amax()), "{}: {} vs {fd}", p.name, grad[i]);
        }
        for (l, g) in ev.multipliers.iter().zip(&ev.constraint_values) {
            prop_assert!(((l * g) - mu).abs() <= 1e-12 * mu);
        }
    }

    #[test]
    fn certificate_of_barrier_point_reproduces_barrier_gradient(u in unit_pair(), k in 0usize..5, mu_exp in -6i32..1) {
        let p = problem(BUILTIN_NAMES[k]);
        let Some(x) = interior_point(&p, &u) else { return Ok(()) };
        let mu = 10f64.powi(mu_exp);
        let ev = barrier_eval(&p, &x, mu).unwrap();
        let c = check_kkt(&p, &x, &ev.multipliers, &KktTolerances::default()).unwrap();
        prop_assert_eq!(c.stationarity_residual, ev.gradient.unwrap().norm());
        prop_assert!((c.complementarity_residual - mu).abs() <= 1e-12 * mu);
        prop_assert_eq!(c.dual_feasibility_violation, 0.0);
        prop_assert_eq!(c.primal_feasibility_violation, 0.0);
    }

    #[test]
    fn stationarity_scales_with_objective(u in unit_pair(), k in 0usize..5, s in 0.1f64..10.0) {
        let p = problem(BUILTIN_NAMES[k]);
        let Some(x) = interior_point(&p, &u) else { return Ok(()) };
        let lambda = vec![0.5; p.num_constraints()];
        let scaled_lambda: Vec<f64> = lambda.iter().map(|l| l * s).collect();
        let q = p.with_objective(&format!("{s} * ({})", p.file().objective)).unwrap();
        let c = check_kkt(&p, &x, &lambda, &KktTolerances::default()).unwrap();
        let cs = check_kkt(&q, &x, &scaled_lambda, &KktTolerances::default()).unwrap();
        prop_assert!(close(cs.stationarity_residual, s * c.stationarity_residual, 1e-12, s * c.stationarity_residual));
    }
}

#[test]
fn lagrangian_gradient_is_linear_in_lambda() {
    let gf = DVector::from_vec(vec![1.0, 2.0]);
    let gs = vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])];
    assert_eq!(lagrangian_gradient(&gf, &gs, &[1.0, 2.0]), DVector::zeros(2));
    assert_eq!(lagrangian_gradient(&gf, &gs, &[0.0, 0.0]), gf);
}
