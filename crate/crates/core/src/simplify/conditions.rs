//! Condition assignment: selects become boolean products, sums are factored, and
//! each output is split into guarded reductions.

use std::collections::HashMap;

use crate::error::Result;
use crate::ir::eval::{eval_expr_memo, truth, Environment};
use crate::ir::{ExprArena, ExprId, Node};
use crate::real::Real;

use super::horner::factor_horner_memo;

/// `value` is added to its output only where every literal of `guard` holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Reduction {
    pub guard: ExprId,
    pub value: ExprId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConditionedOutput {
    pub reductions: Vec<Reduction>,
}

/// One accumulation list per output root.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConditionedIr {
    pub outputs: Vec<ConditionedOutput>,
}

/// Literals of a guard product, `InBounds` tests first. The constant 1 has none.
pub fn guard_literals(arena: &ExprArena, guard: ExprId) -> Vec<ExprId> {
    match arena.node(guard) {
        Node::Const(_) => Vec::new(),
        Node::Product(c) => c.to_vec(),
        _ => vec![guard],
    }
}

/// Rewrites every `Select(b, e0, e1)` as `b*e0 + not(b)*e1`.
pub fn eliminate_selects(arena: &mut ExprArena, e: ExprId) -> ExprId {
    let mut memo = HashMap::new();
    eliminate_selects_memo(arena, e, &mut memo)
}

fn eliminate_selects_memo(arena: &mut ExprArena, e: ExprId, memo: &mut HashMap<ExprId, ExprId>) -> ExprId {
    for n in arena.reachable(&[e]) {
        if memo.contains_key(&n) {
            continue;
        }
        let node = arena.node(n).clone();
        let new = match &node {
            Node::Select(c, a, b) => {
                let (c, a, b) = (memo[c], memo[a], memo[b]);
                let c = arena.truthy(c);
                let nc = arena.not(c);
                let t = arena.mul(&[c, a]);
                let f = arena.mul(&[nc, b]);
                arena.add(&[t, f])
            }
            _ => {
                let mapped = crate::ir::remap_children(&node, &|x| memo[&x]);
                if mapped == node {
                    n
                } else {
                    super::canon::construct(arena, &mapped)
                }
            }
        };
        memo.insert(n, new);
    }
    memo[&e]
}

/// Splits a summand into its boolean factors (the guard) and the rest.
fn split_term(arena: &mut ExprArena, t: ExprId) -> (Vec<ExprId>, ExprId) {
    if arena.const_value(t).is_none() && arena.is_boolean(t) {
        let lits = match arena.node(t) {
            Node::Product(c) => c.to_vec(),
            _ => vec![t],
        };
        return (lits, arena.one());
    }
    match arena.node(t).clone() {
        Node::Product(c) => {
            let (lits, rest): (Vec<ExprId>, Vec<ExprId>) =
                c.iter().partition(|&&x| arena.const_value(x).is_none() && arena.is_boolean(x));
            let value = arena.mul(&rest);
            (lits, value)
        }
        _ => (Vec::new(), t),
    }
}

/// Lowers each root into guarded reductions. Summands with the same guard are
/// merged into one reduction, in order of first appearance.
pub fn lower_conditions(arena: &mut ExprArena, roots: &[ExprId]) -> ConditionedIr {
    let mut sel_memo = HashMap::new();
    let mut horner_memo = HashMap::new();
    let mut outputs = Vec::with_capacity(roots.len());
    for &root in roots {
        let e = eliminate_selects_memo(arena, root, &mut sel_memo);
        let e = factor_horner_memo(arena, e, &mut horner_memo);
        let terms: Vec<ExprId> = match arena.node(e) {
            Node::Sum(c) => c.to_vec(),
            _ => vec![e],
        };
        let mut groups: Vec<(ExprId, Vec<ExprId>)> = Vec::new();
        for t in terms {
            if arena.is_const(t, 0.0) {
                continue;
            }
            let (lits, value) = split_term(arena, t);
            let guard = arena.mul(&lits);
            match groups.iter_mut().find(|(g, _)| *g == guard) {
                Some((_, vals)) => vals.push(value),
                None => groups.push((guard, vec![value])),
            }
        }
        let reductions = groups
            .into_iter()
            .filter_map(|(guard, vals)| {
                let value = arena.add(&vals);
                (!arena.is_const(value, 0.0)).then_some(Reduction { guard, value })
            })
            .collect();
        outputs.push(ConditionedOutput { reductions });
    }
    ConditionedIr { outputs }
}

/// Reference evaluation with guards honored: a reduction's value is evaluated only
/// when its guard holds, and accumulation starts from 0 in reduction order.
pub fn eval_conditioned<T: Real, E: Environment<T> + ?Sized>(
    arena: &ExprArena,
    cir: &ConditionedIr,
    env: &E,
) -> Result<Vec<T>> {
    let mut memo = HashMap::new();
    let mut out = Vec::with_capacity(cir.outputs.len());
    for o in &cir.outputs {
        let mut acc = T::zero();
        'red: for r in &o.reductions {
            for lit in guard_literals(arena, r.guard) {
                if !truth(eval_expr_memo(arena, lit, env, &mut memo)?) {
                    continue 'red;
                }
            }
            acc = acc + eval_expr_memo(arena, r.value, env, &mut memo)?;
        }
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Access, CmpOp, Loc, Offset, Source};

    fn var(a: &mut ExprArena, i: u16) -> ExprId {
        a.access(Access { source: Source::Array(i), channel: 0, loc: Loc::Offset(Offset::ZERO) })
    }

    #[test]
    fn select_becomes_two_guarded_reductions() {
        let mut ar = ExprArena::new();
        let (x, y, z) = (var(&mut ar, 0), var(&mut ar, 1), var(&mut ar, 2));
        let zero = ar.zero();
        let c = ar.compare(CmpOp::Greater, x, zero);
        let s = ar.select(c, y, z);
        let cir = lower_conditions(&mut ar, &[s]);
        let red = &cir.outputs[0].reductions;
        assert_eq!(red.len(), 2);
        let nc = ar.not(c);
        let guards: Vec<ExprId> = red.iter().map(|r| r.guard).collect();
        assert!(guards.contains(&c) && guards.contains(&nc));
        for r in red {
            assert!(!ar.is_boolean(r.value));
        }
    }

    #[test]
    fn same_guard_terms_merge() {
        let mut ar = ExprArena::new();
        let (x, y, z) = (var(&mut ar, 0), var(&mut ar, 1), var(&mut ar, 2));
        let b = ar.in_bounds(Offset::new(&[1, 0]));
        let t1 = ar.mul(&[b, x]);
        let t2 = ar.mul(&[b, y]);
        let e = ar.add(&[t1, t2, z]);
        let cir = lower_conditions(&mut ar, &[e]);
        let red = &cir.outputs[0].reductions;
        assert_eq!(red.len(), 2);
        let xy = ar.add(&[x, y]);
        assert!(red.contains(&Reduction { guard: b, value: xy }));
        let one = ar.one();
        assert!(red.contains(&Reduction { guard: one, value: z }));
    }

    #[test]
    fn guard_literals_put_bounds_tests_first() {
        let mut ar = ExprArena::new();
        let x = var(&mut ar, 0);
        let zero = ar.zero();
        let c = ar.compare(CmpOp::Less, x, zero);
        let b = ar.in_bounds(Offset::new(&[0, -1]));
        let g = ar.mul(&[c, b]);
        assert_eq!(guard_literals(&ar, g), vec![b, c]);
    }
}
