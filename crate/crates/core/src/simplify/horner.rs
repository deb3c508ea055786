//! Greedy multivariate Horner factoring of sums.

use std::collections::HashMap;

use crate::ir::{ExprArena, ExprId, Node};

/// Factors of a summand that may be pulled out, with multiplicity one each.
///
/// A product with boolean factors only offers those: moving a value factor out of
/// a gated product would evaluate it where the gate is false.
fn factors(arena: &ExprArena, term: ExprId) -> Vec<ExprId> {
    match arena.node(term) {
        Node::Product(c) => {
            let mut v: Vec<ExprId> = c.iter().copied().filter(|&x| arena.const_value(x).is_none()).collect();
            if v.iter().any(|&x| arena.is_boolean(x)) {
                v.retain(|&x| arena.is_boolean(x));
            }
            v.dedup();
            v
        }
        Node::Const(_) => Vec::new(),
        _ => vec![term],
    }
}

/// `term / f`, where `f` is a factor of `term`.
fn divide(arena: &mut ExprArena, term: ExprId, f: ExprId) -> ExprId {
    if term == f {
        return arena.one();
    }
    match arena.node(term).clone() {
        Node::Product(c) => {
            let mut rest: Vec<ExprId> = c.to_vec();
            let at = rest.iter().position(|&x| x == f).expect("factor present");
            rest.remove(at);
            arena.mul(&rest)
        }
        _ => unreachable!("divide by a non-factor"),
    }
}

/// Factors a list of summands. Picks the factor shared by the most summands
/// (booleans win ties, then the lowest structural hash), pulls it out, and recurses
/// on the quotient and on the remainder.
fn factor_terms(arena: &mut ExprArena, terms: &[ExprId]) -> ExprId {
    let mut counts: HashMap<ExprId, usize> = HashMap::new();
    let mut order: Vec<ExprId> = Vec::new();
    for &t in terms {
        for f in factors(arena, t) {
            let n = counts.entry(f).or_insert(0);
            if *n == 0 {
                order.push(f);
            }
            *n += 1;
        }
    }
    let best = order
        .iter()
        .copied()
        .filter(|f| counts[f] >= 2)
        .max_by(|&a, &b| {
            let ka = (counts[&a], arena.is_boolean(a));
            let kb = (counts[&b], arena.is_boolean(b));
            ka.cmp(&kb).then_with(|| arena.structural_hash(b).cmp(&arena.structural_hash(a)))
        });
    let Some(f) = best else {
        return arena.add(terms);
    };
    let mut with = Vec::new();
    let mut without = Vec::new();
    for &t in terms {
        if factors(arena, t).contains(&f) {
            with.push(divide(arena, t, f));
        } else {
            without.push(t);
        }
    }
    let inner = factor_terms(arena, &with);
    let pulled = arena.mul(&[f, inner]);
    if without.is_empty() {
        return pulled;
    }
    let rest = factor_terms(arena, &without);
    arena.add(&[pulled, rest])
}

/// Applies Horner factoring to every sum reachable from `e`, innermost first.
pub fn factor_horner(arena: &mut ExprArena, e: ExprId) -> ExprId {
    let mut memo: HashMap<ExprId, ExprId> = HashMap::new();
    factor_horner_memo(arena, e, &mut memo)
}

pub fn factor_horner_memo(arena: &mut ExprArena, e: ExprId, memo: &mut HashMap<ExprId, ExprId>) -> ExprId {
    for n in arena.reachable(&[e]) {
        if memo.contains_key(&n) {
            continue;
        }
        let node = arena.node(n).clone();
        let new = match &node {
            Node::Sum(c) => {
                let c: Vec<ExprId> = c.iter().map(|x| memo[x]).collect();
                factor_terms(arena, &c)
            }
            Node::Const(_) | Node::Param(_) | Node::Access(_) | Node::IndexCoord(_) | Node::InBounds(_) => n,
            _ => {
                let rebuilt = crate::ir::remap_children(&node, &|x| memo[&x]);
                if rebuilt == node {
                    n
                } else {
                    super::canon::construct(arena, &rebuilt)
                }
            }
        };
        memo.insert(n, new);
    }
    memo[&e]
}

/// Number of binary multiplications needed to evaluate `e` as a tree (shared nodes once).
pub fn multiplication_count(arena: &ExprArena, e: ExprId) -> usize {
    arena
        .reachable(&[e])
        .into_iter()
        .map(|n| match arena.node(n) {
            Node::Product(c) => c.len() - 1,
            _ => 0,
        })
        .sum()
}
