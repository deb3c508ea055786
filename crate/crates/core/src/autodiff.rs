//! One-pass forward symbolic differentiation over the expression DAG.
//!
//! Derivatives are taken with respect to one specific unknown access (unknown,
//! channel, offset or slot). Every result is built through the canonical
//! constructors, so zero products from the chain rule vanish on construction.

use std::collections::HashMap;

use crate::frontend::{ComputedDecl, ComputedMode};
use crate::ir::{Access, CmpOp, ExprArena, ExprId, Exponent, Loc, Node, Source, UnaryFn};

/// How a computed array behaves under differentiation.
#[derive(Clone, Debug)]
pub struct ComputedInfo {
    pub mode: ComputedMode,
    pub value_channels: usize,
    /// Unknown accesses of the definition, at the array's own origin.
    pub accesses: Vec<Access>,
}

impl ComputedInfo {
    pub fn from_decl(d: &ComputedDecl) -> Self {
        ComputedInfo { mode: d.mode, value_channels: d.value_channels(), accesses: d.unknown_accesses.clone() }
    }
}

/// Memo table `(expression, variable) -> derivative`, per compilation.
#[derive(Debug)]
pub struct DerivativeCache {
    map: HashMap<(ExprId, ExprId), ExprId>,
    enabled: bool,
}

impl Default for DerivativeCache {
    fn default() -> Self {
        Self::new()
    }
}

impl DerivativeCache {
    pub fn new() -> Self {
        DerivativeCache { map: HashMap::new(), enabled: true }
    }

    /// A cache that only memoizes within a single `derivative` call.
    pub fn disabled() -> Self {
        DerivativeCache { map: HashMap::new(), enabled: false }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Translates the location of a definition access `a` to the place a computed value is read.
pub fn relocate(a: Access, read_at: Loc) -> Option<Access> {
    match (a.loc, read_at) {
        (Loc::Offset(o), Loc::Offset(q)) => Some(a.with_loc(Loc::Offset(o + q))),
        (Loc::Offset(o), slot @ Loc::Slot { .. }) if o.is_zero() => Some(a.with_loc(slot)),
        _ => None,
    }
}

/// Returns d`expr` / d`var`, where `var` is an unknown access node.
pub fn derivative(
    arena: &mut ExprArena,
    computed: &[ComputedInfo],
    expr: ExprId,
    var: ExprId,
    cache: &mut DerivativeCache,
) -> ExprId {
    let target = match arena.node(var) {
        Node::Access(a @ Access { source: Source::Unknown(_), .. }) => *a,
        other => panic!("derivative variable must be an unknown access, got {other:?}"),
    };
    let mut local = HashMap::new();
    let memo = if cache.enabled { &mut cache.map } else { &mut local };
    let mut d = Diff { computed, var, target, memo };
    d.run(arena, expr)
}

struct Diff<'a> {
    computed: &'a [ComputedInfo],
    var: ExprId,
    target: Access,
    memo: &'a mut HashMap<(ExprId, ExprId), ExprId>,
}

impl Diff<'_> {
    fn run(&mut self, arena: &mut ExprArena, e: ExprId) -> ExprId {
        if let Some(&d) = self.memo.get(&(e, self.var)) {
            return d;
        }
        let d = if !arena.has_unknown(e) && !arena.has_computed(e) {
            arena.zero()
        } else {
            self.rule(arena, e)
        };
        self.memo.insert((e, self.var), d);
        d
    }

    fn rule(&mut self, arena: &mut ExprArena, e: ExprId) -> ExprId {
        match arena.node(e).clone() {
            Node::Const(_) | Node::Param(_) | Node::IndexCoord(_) | Node::InBounds(_) => arena.zero(),
            Node::Compare(..) | Node::Bool(..) => arena.zero(),
            Node::Access(a) => self.access(arena, a),
            Node::Sum(children) => {
                let parts: Vec<ExprId> = children.iter().map(|&c| self.run(arena, c)).collect();
                arena.add(&parts)
            }
            Node::Product(children) => {
                let mut terms = Vec::new();
                for i in 0..children.len() {
                    let dc = self.run(arena, children[i]);
                    if arena.is_const(dc, 0.0) {
                        continue;
                    }
                    let mut factors: Vec<ExprId> = Vec::with_capacity(children.len());
                    factors.extend(children.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &c)| c));
                    factors.push(dc);
                    terms.push(arena.mul(&factors));
                }
                arena.add(&terms)
            }
            Node::Pow(b, k) => {
                let db = self.run(arena, b);
                if arena.is_const(db, 0.0) {
                    return db;
                }
                let coef = arena.num(*k.numer() as f64 / *k.denom() as f64);
                let p = arena.pow(b, k - Exponent::from_integer(1));
                arena.mul(&[coef, p, db])
            }
            Node::Unary(f, a) => {
                let da = self.run(arena, a);
                if arena.is_const(da, 0.0) {
                    return da;
                }
                let outer = match f {
                    UnaryFn::Sqrt => {
                        let h = arena.num(0.5);
                        let p = arena.pow(a, Exponent::new(-1, 2));
                        arena.mul(&[h, p])
                    }
                    UnaryFn::Sin => arena.unary(UnaryFn::Cos, a),
                    UnaryFn::Cos => {
                        let s = arena.unary(UnaryFn::Sin, a);
                        arena.neg(s)
                    }
                    UnaryFn::Exp => e,
                    UnaryFn::Log => arena.powi(a, -1),
                    UnaryFn::Abs => {
                        let z = arena.zero();
                        let pos = arena.compare(CmpOp::Greater, a, z);
                        let neg = arena.compare(CmpOp::Less, a, z);
                        arena.sub(pos, neg)
                    }
                    UnaryFn::Atan => {
                        let one = arena.one();
                        let sq = arena.powi(a, 2);
                        let den = arena.add(&[one, sq]);
                        arena.powi(den, -1)
                    }
                };
                arena.mul(&[outer, da])
            }
            Node::Select(c, a, b) => {
                let da = self.run(arena, a);
                let db = self.run(arena, b);
                arena.select(c, da, db)
            }
        }
    }

    fn access(&mut self, arena: &mut ExprArena, a: Access) -> ExprId {
        match a.source {
            Source::Unknown(_) => {
                if a == self.target {
                    arena.one()
                } else {
                    arena.zero()
                }
            }
            Source::Array(_) | Source::Direction(_) => arena.zero(),
            Source::Computed(i) => {
                let info = &self.computed[i as usize];
                let c = a.channel as usize;
                if info.mode == ComputedMode::Freeze || c >= info.value_channels {
                    return arena.zero();
                }
                let k_count = info.accesses.len();
                let mut terms = Vec::new();
                for (k, &u) in info.accesses.iter().enumerate() {
                    if relocate(u, a.loc) == Some(self.target) {
                        let ch = info.value_channels + c * k_count + k;
                        terms.push(arena.access(Access { source: Source::Computed(i), channel: ch as u16, loc: a.loc }));
                    }
                }
                arena.add(&terms)
            }
        }
    }
}
