mod common;

use common::gen::*;
use minopt::autodiff::{derivative, DerivativeCache};
use minopt::backend::Site;
use minopt::ir::{eval_expr, ExprArena, Node};
use minopt::simplify::canonicalize;
use proptest::prelude::*;

/// Interior element of the 4×3 grid: every offset in -1..=1 is in bounds.
const AT: [usize; 3] = [1, 1, 0];

fn unknown_offsets(t: &Tree, out: &mut Vec<(i8, i8)>) {
    match t {
        Tree::Read(3, i, j) => out.push((*i, *j)),
        Tree::Add(a, b) | Tree::Sub(a, b) | Tree::Mul(a, b) | Tree::Div(a, b) | Tree::Cmp(_, a, b) => {
            unknown_offsets(a, out);
            unknown_offsets(b, out);
        }
        Tree::And(a, b) | Tree::Or(a, b) => {
            unknown_offsets(a, out);
            unknown_offsets(b, out);
        }
        Tree::PowI(a, _) | Tree::Unary(_, a) | Tree::Not(a) => unknown_offsets(a, out),
        Tree::Select(c, a, b) => {
            unknown_offsets(c, out);
            unknown_offsets(a, out);
            unknown_offsets(b, out);
        }
        _ => {}
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn symbolic_partials_match_central_differences(t in smooth(), seed in 0u64..10_000) {
        let spec = problem();
        let mut ar = spec.arena.clone();
        let raw = build_raw(&mut ar, &t);
        let e = canonicalize(&mut ar, raw);
        let mut offsets = Vec::new();
        unknown_offsets(&t, &mut offsets);
        offsets.sort();
        offsets.dedup();
        let lay = layout(&spec);
        let shape = spec.domain_shape(0);
        let site = Site::Grid { shape, coords: AT };
        let mut st = random_state(&spec, Flavor::General, seed);
        let f0 = eval_expr(&ar, e, &env(st.inputs(&lay, &[]), site)).unwrap();
        prop_assume!(f0.is_finite() && f0.abs() < 1e4);
        let mut cache = DerivativeCache::new();
        for (i, j) in offsets {
            let var = ar.access(access(3, i, j));
            let d = derivative(&mut ar, &[], e, var, &mut cache);
            let sym = eval_expr(&ar, d, &env(st.inputs(&lay, &[]), site)).unwrap();
            let idx = (1 + i as i64) as usize + shape[0] * (1 + j as i64) as usize;
            let x0 = st.x[idx];
            let h = 1e-6;
            st.x[idx] = x0 + h;
            let fp = eval_expr(&ar, e, &env(st.inputs(&lay, &[]), site)).unwrap();
            st.x[idx] = x0 - h;
            let fm = eval_expr(&ar, e, &env(st.inputs(&lay, &[]), site)).unwrap();
            st.x[idx] = x0;
            let fd = (fp - fm) / (2.0 * h);
            prop_assert!(
                (sym - fd).abs() <= 1e-5 * sym.abs().max(1.0),
                "d/dX({i},{j}): symbolic {sym}, central difference {fd}\n{}", minopt::ir::dump(&ar, &[e])
            );
        }
    }

    #[test]
    fn memoized_and_fresh_derivatives_agree(t in smooth(), seed in 0u64..1000) {
        let spec = problem();
        let mut ar = spec.arena.clone();
        let raw = build_raw(&mut ar, &t);
        let e = canonicalize(&mut ar, raw);
        let var = ar.access(access(3, 0, 0));
        let mut cache = DerivativeCache::new();
        let _ = derivative(&mut ar, &[], e, var, &mut cache);
        let memo = derivative(&mut ar, &[], e, var, &mut cache);
        let fresh = derivative(&mut ar, &[], e, var, &mut DerivativeCache::disabled());
        let lay = layout(&spec);
        let st = random_state(&spec, Flavor::General, seed);
        let site = Site::Grid { shape: spec.domain_shape(0), coords: AT };
        let a = eval_expr(&ar, memo, &env(st.inputs(&lay, &[]), site)).unwrap();
        let b = eval_expr(&ar, fresh, &env(st.inputs(&lay, &[]), site)).unwrap();
        prop_assert!(same(a, b));
    }

    #[test]
    fn expressions_without_unknowns_have_zero_partials(t in tree(Flavor::General)) {
        let mut ar: ExprArena = problem().arena.clone();
        let raw = build_raw(&mut ar, &t);
        let e = canonicalize(&mut ar, raw);
        let reads_x = ar.accesses(e).iter().any(|a| matches!(a.source, minopt::ir::Source::Unknown(_)));
        prop_assume!(!reads_x);
        let var = ar.access(access(3, 0, 0));
        let d = derivative(&mut ar, &[], e, var, &mut DerivativeCache::new());
        prop_assert!(matches!(ar.node(d), Node::Const(_)) && ar.is_const(d, 0.0));
    }

    #[test]
    fn booleans_are_exactly_zero_or_one(t in tree(Flavor::General), seed in 0u64..1000) {
        let spec = problem();
        let mut ar = spec.arena.clone();
        let e = build_raw(&mut ar, &t);
        let lay = layout(&spec);
        let st = random_state(&spec, Flavor::General, seed);
        for site in sites(&spec) {
            let en = env(st.inputs(&lay, &[]), site);
            for n in ar.reachable(&[e]) {
                if ar.is_boolean(n) && !matches!(ar.node(n), Node::Const(_)) {
                    let v = eval_expr(&ar, n, &en).unwrap();
                    prop_assert!(v.to_bits() == 0f64.to_bits() || v.to_bits() == 1f64.to_bits(), "{v}");
                }
            }
        }
    }
}

#[test]
fn laplacian_partials_are_constants() {
    let mut ar = problem().arena.clone();
    let x0 = ar.access(access(3, 0, 0));
    let x1 = ar.access(access(3, 1, 0));
    let e = ar.sub(x0, x1);
    let d = derivative(&mut ar, &[], e, x0, &mut DerivativeCache::new());
    assert!(ar.is_const(d, 1.0));
    let d = derivative(&mut ar, &[], e, x1, &mut DerivativeCache::new());
    assert!(ar.is_const(d, -1.0));
}
