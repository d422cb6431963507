use std::collections::BTreeMap;

use cgl_core::expr::{parse_plain, EvalEnv, ExprAst, Func};
use cgl_core::jets::{seed_jets, Jet, JetSpace};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = ExprAst> {
    prop_oneof![
        (-3.0..3.0f64).prop_map(|v| ExprAst::Const((v * 100.0).round() / 100.0)),
        (0usize..2).prop_map(ExprAst::Var),
    ]
}

fn expr() -> impl Strategy<Value = ExprAst> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ExprAst::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ExprAst::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| ExprAst::mul(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| {
                // denominator bounded away from zero
                ExprAst::div(a, ExprAst::add(ExprAst::Const(2.5), ExprAst::call(Func::Cos, b)))
            }),
            inner.clone().prop_map(ExprAst::neg),
            inner.clone().prop_map(|a| ExprAst::call(Func::Sin, a)),
            inner.clone().prop_map(|a| ExprAst::call(Func::Cos, a)),
            inner.clone().prop_map(|a| ExprAst::call(Func::Exp, ExprAst::call(Func::Sin, a))),
            (inner, 0i32..4).prop_map(|(a, k)| ExprAst::pow(a, k)),
        ]
    })
}

fn eval_jet(e: &ExprAst, point: &[f64], order: usize) -> Jet {
    let vars = seed_jets(point, order).unwrap();
    let params = BTreeMap::new();
    e.evaluate(&EvalEnv { vars: &vars, params: &params }).unwrap()
}

fn eval(e: &ExprAst, point: &[f64]) -> f64 {
    e.eval_f64(point, &BTreeMap::new()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn jet(coeffs: Vec<f64>) -> Jet {
    let space = JetSpace::get(2, 3).unwrap();
    Jet::from_coeffs(&space, coeffs)
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn jet_ring_axioms(a in coeffs(), b in coeffs(), c in coeffs()) {
        let (a, b, c) = (jet(a), jet(b), jet(c));
        let ab = a.mul_jet(&b);
        let ba = b.mul_jet(&a);
        let abc1 = ab.mul_jet(&c);
        let abc2 = a.mul_jet(&b.mul_jet(&c));
        let mut b_plus_c = b.clone();
        b_plus_c.add_scaled(&c, 1.0);
        let left = a.mul_jet(&b_plus_c);
        let mut right = ab.clone();
        right.add_product(&a, &c, 1.0);
        for i in 0..10 {
            prop_assert!(close(ab.coeffs()[i], ba.coeffs()[i], 1e-12));
            prop_assert!(close(abc1.coeffs()[i], abc2.coeffs()[i], 1e-12));
            prop_assert!(close(left.coeffs()[i], right.coeffs()[i], 1e-12));
        }
    }

    #[test]
    fn jet_division_inverts_multiplication(a in coeffs(), mut b in coeffs(), lead in 0.5..2.0f64) {
        b[0] = lead;
        let (a, b) = (jet(a), jet(b));
        let q = a.div_jet(&b).unwrap();
        let back = q.mul_jet(&b);
        for i in 0..10 {
            prop_assert!(close(back.coeffs()[i], a.coeffs()[i], 1e-10));
        }
    }

    #[test]
    fn derivatives_match_finite_differences(e in expr(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let p = [x, y];
        let j = eval_jet(&e, &p, 2);
        let h = 1e-4;
        for v in 0..2 {
            let mut plus = p;
            let mut minus = p;
            plus[v] += h;
            minus[v] -= h;
            let (fp, fm, f0) = (eval(&e, &plus), eval(&e, &minus), eval(&e, &p));
            let fd1 = (fp - fm) / (2.0 * h);
            let fd2 = (fp - 2.0 * f0 + fm) / (h * h);
            let scale = 1.0 + f0.abs() + fp.abs() + fm.abs();
            prop_assert!((j.first(v) - fd1).abs() < 1e-5 * scale, "d/dx{}: {} vs {}", v, j.first(v), fd1);
            prop_assert!((j.second(v, v) - fd2).abs() < 1e-2 * scale, "d2/dx{}2: {} vs {}", v, j.second(v, v), fd2);
            let symbolic = eval(&e.diff(v), &p);
            prop_assert!(close(symbolic, j.first(v), 1e-9));
        }
    }

    #[test]
    fn printing_reparses_to_the_same_function(e in expr(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let text = e.to_string();
        let again = parse_plain(&text, 2).unwrap();
        prop_assert_eq!(again.to_string(), text);
        prop_assert!(close(eval(&again, &[x, y]), eval(&e, &[x, y]), 1e-12));
    }

    #[test]
    fn constant_folding_preserves_values(e in expr(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let folded = e.fold_constants();
        prop_assert!(close(eval(&folded, &[x, y]), eval(&e, &[x, y]), 1e-12));
        let jf = eval_jet(&folded, &[x, y], 2);
        let je = eval_jet(&e, &[x, y], 2);
        for (a, b) in jf.coeffs().iter().zip(je.coeffs()) {
            prop_assert!(close(*a, *b, 1e-10));
        }
    }
}
