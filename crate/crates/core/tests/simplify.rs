mod common;

use common::gen::*;
use minopt::backend::{exec_grid_strict, schedule};
use minopt::ir::{eval_expr, ExprArena, ExprId, Offset};
use minopt::simplify::horner::multiplication_count;
use minopt::simplify::{canonicalize, eval_conditioned, factor_horner, lower_conditions};
use proptest::prelude::*;

fn eval_all(spec: &minopt::frontend::ProblemSpec, ar: &ExprArena, e: ExprId, seed: u64, f: Flavor) -> Vec<f64> {
    let st = random_state(spec, f, seed);
    let lay = layout(spec);
    let inputs = st.inputs(&lay, &[]);
    sites(spec).into_iter().map(|s| eval_expr(ar, e, &env(inputs, s)).unwrap()).collect()
}

fn eval_lowered(spec: &minopt::frontend::ProblemSpec, ar: &mut ExprArena, e: ExprId, seed: u64, f: Flavor) -> Vec<f64> {
    let cir = lower_conditions(ar, &[e]);
    let st = random_state(spec, f, seed);
    let lay = layout(spec);
    let inputs = st.inputs(&lay, &[]);
    sites(spec).into_iter().map(|s| eval_conditioned(ar, &cir, &env(inputs, s)).unwrap()[0]).collect()
}

/// `want` is the raw expression's value; where it is not finite, a rewrite may
/// legitimately gate the offending subterm away.
fn close(want: f64, b: f64) -> bool {
    let a = want;
    !a.is_finite() || same(a, b) || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rewrites_are_exact_on_integer_data(t in tree(Flavor::Exact), seed in 0u64..1000) {
        let spec = problem();
        let mut ar = spec.arena.clone();
        let raw = build_raw(&mut ar, &t);
        let canon = canonicalize(&mut ar, raw);
        let factored = factor_horner(&mut ar, canon);
        let want = eval_all(&spec, &ar, raw, seed, Flavor::Exact);
        let got_c = eval_all(&spec, &ar, canon, seed, Flavor::Exact);
        let got_f = eval_all(&spec, &ar, factored, seed, Flavor::Exact);
        let got_l = eval_lowered(&spec, &mut ar, canon, seed, Flavor::Exact);
        for i in 0..want.len() {
            prop_assert!(!want[i].is_finite() || same(want[i], got_c[i]), "canonicalize at {i}: {} vs {}", want[i], got_c[i]);
            prop_assert!(!want[i].is_finite() || same(want[i], got_f[i]), "factor_horner at {i}: {} vs {}", want[i], got_f[i]);
            prop_assert!(!want[i].is_finite() || same(want[i], got_l[i]), "lower_conditions at {i}: {} vs {}", want[i], got_l[i]);
        }
    }

    #[test]
    fn rewrites_hold_to_rounding_on_real_data(t in tree(Flavor::Positive), seed in 0u64..1000) {
        let spec = problem();
        let mut ar = spec.arena.clone();
        let raw = build_raw(&mut ar, &t);
        let canon = canonicalize(&mut ar, raw);
        let factored = factor_horner(&mut ar, canon);
        let want = eval_all(&spec, &ar, raw, seed, Flavor::Positive);
        let got_c = eval_all(&spec, &ar, canon, seed, Flavor::Positive);
        let got_f = eval_all(&spec, &ar, factored, seed, Flavor::Positive);
        let got_l = eval_lowered(&spec, &mut ar, canon, seed, Flavor::Positive);
        for i in 0..want.len() {
            prop_assert!(close(want[i], got_c[i]), "canonicalize at {i}: {} vs {}", want[i], got_c[i]);
            prop_assert!(close(want[i], got_f[i]), "factor_horner at {i}: {} vs {}", want[i], got_f[i]);
            prop_assert!(close(want[i], got_l[i]), "lower_conditions at {i}: {} vs {}", want[i], got_l[i]);
        }
    }

    #[test]
    fn canonicalize_is_idempotent(t in tree(Flavor::General)) {
        let mut ar = problem().arena;
        let raw = build_raw(&mut ar, &t);
        let once = canonicalize(&mut ar, raw);
        prop_assert_eq!(canonicalize(&mut ar, once), once);
    }

    #[test]
    fn factoring_never_adds_multiplications(t in tree(Flavor::General)) {
        let mut ar = problem().arena;
        let raw = build_raw(&mut ar, &t);
        let canon = canonicalize(&mut ar, raw);
        let factored = factor_horner(&mut ar, canon);
        prop_assert!(multiplication_count(&ar, factored) <= multiplication_count(&ar, canon));
    }

    #[test]
    fn guards_keep_reads_in_bounds(t in tree(Flavor::General), seed in 0u64..1000, global in any::<bool>()) {
        let spec = problem();
        let mut ar = spec.arena.clone();
        let e = if global {
            let body = build_raw(&mut ar, &t);
            let mut offs = Vec::new();
            read_offsets(&t, &mut offs);
            let mut factors: Vec<ExprId> = offs.into_iter().filter(|o| !o.is_zero()).map(|o| ar.in_bounds(o)).collect();
            factors.push(body);
            ar.mul(&factors)
        } else {
            build_raw(&mut ar, &protect_locally(&t))
        };
        let canon = canonicalize(&mut ar, e);
        let cir = lower_conditions(&mut ar, &[canon]);
        let st = random_state(&spec, Flavor::General, seed);
        let lay = layout(&spec);
        let inputs = st.inputs(&lay, &[]);
        for s in sites(&spec) {
            let r = eval_conditioned(&ar, &cir, &Trapping(env(inputs, s)));
            prop_assert!(r.is_ok(), "interpreter read out of bounds: {:?}", r);
        }
        let prog = schedule(&ar, &cir).unwrap();
        let r = exec_grid_strict(&prog, &inputs, spec.domain_shape(0), &|_, _| {});
        prop_assert!(r.is_ok(), "kernel read out of bounds");
    }
}

#[test]
fn zero_offset_is_always_in_bounds() {
    let mut ar = ExprArena::new();
    let b = ar.in_bounds(Offset::ZERO);
    assert!(ar.is_const(b, 1.0));
}
