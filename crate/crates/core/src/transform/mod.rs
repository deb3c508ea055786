//! Symbolic bodies of the solver routines: cost, -2JᵀF, diag(2JᵀJ), 2JᵀJp and J.
//!
//! Stencil templates are inverted around the unknown at the origin (one shifted
//! copy per offset at which the template reads the unknown). Graph templates
//! produce scatter lists keyed by hyperedge slot.

mod graph;
mod stencil;

use std::collections::{HashMap, HashSet};

pub use graph::{build_graph_routines, GraphRoutines, Scatter};
pub use stencil::{build_jtf_stencil, build_jtj_stencil, collect_origin_residuals, shift_exp, ShiftedResidual};

use crate::autodiff::{derivative, relocate, ComputedInfo, DerivativeCache};
use crate::frontend::{ComputedMode, ProblemSpec, TemplateDomain};
use crate::ir::{Access, ExprArena, ExprId, Loc, Node, Offset, Source};

/// Differentiation context for one compilation.
pub struct Ctx<'a> {
    pub arena: &'a mut ExprArena,
    pub computed: Vec<ComputedInfo>,
    /// Unknown accesses of every computed definition (any mode), for guard construction.
    pub computed_reads: Vec<Vec<Access>>,
    pub cache: DerivativeCache,
}

impl<'a> Ctx<'a> {
    pub fn new(spec: &'a mut ProblemSpec) -> Self {
        let computed = spec.computed.iter().map(ComputedInfo::from_decl).collect();
        let computed_reads = spec
            .computed
            .iter()
            .map(|c| {
                let mut v: Vec<Access> = c.defs.iter().flat_map(|&d| spec.arena.accesses(d)).collect();
                v.sort();
                v.dedup();
                v
            })
            .collect();
        Ctx { arena: &mut spec.arena, computed, computed_reads, cache: DerivativeCache::new() }
    }

    pub fn d(&mut self, e: ExprId, var: ExprId) -> ExprId {
        derivative(self.arena, &self.computed, e, var, &mut self.cache)
    }

    /// Unknown accesses `e` depends on: direct reads plus those hidden in cache arrays.
    pub fn unknown_reads(&self, e: ExprId) -> Vec<Access> {
        let mut out = Vec::new();
        for a in self.arena.accesses(e) {
            match a.source {
                Source::Unknown(_) => out.push(a),
                Source::Computed(i) => {
                    let info = &self.computed[i as usize];
                    if info.mode == ComputedMode::Cache && (a.channel as usize) < info.value_channels {
                        out.extend(info.accesses.iter().filter_map(|&u| relocate(u, a.loc)));
                    }
                }
                _ => {}
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// `P` access matching an unknown access.
    pub fn direction(&mut self, u: Access) -> ExprId {
        let Source::Unknown(i) = u.source else { panic!("direction of a non-unknown access") };
        self.arena.access(Access { source: Source::Direction(i), ..u })
    }
}

/// Offsets read by `root` that are not protected by a dominating `InBounds` test.
///
/// A `Select` whose condition contains `InBounds(o)` protects `o` in its taken
/// branch; a product with an `InBounds(o)` factor protects `o` in its other
/// factors, since boolean factors gate the product. Reads inside computed arrays
/// count at their relocated offsets.
pub fn unprotected_offsets(arena: &ExprArena, computed_reads: &[Vec<Access>], root: ExprId) -> Vec<Offset> {
    fn in_bounds_literals(arena: &ExprArena, c: ExprId) -> Vec<Offset> {
        match arena.node(c) {
            Node::InBounds(o) => vec![*o],
            Node::Product(f) => f.iter().filter_map(|&x| match arena.node(x) {
                Node::InBounds(o) => Some(*o),
                _ => None,
            }).collect(),
            _ => Vec::new(),
        }
    }
    fn note(out: &mut HashSet<Offset>, protected: &[Offset], o: Offset) {
        if !o.is_zero() && !protected.contains(&o) {
            out.insert(o);
        }
    }
    fn walk(
        arena: &ExprArena,
        reads: &[Vec<Access>],
        id: ExprId,
        protected: &mut Vec<Offset>,
        seen: &mut HashSet<(ExprId, Vec<Offset>)>,
        out: &mut HashSet<Offset>,
    ) {
        let mut key = protected.clone();
        key.sort();
        key.dedup();
        if !seen.insert((id, key)) {
            return;
        }
        match arena.node(id) {
            Node::Access(a) => {
                if let Loc::Offset(q) = a.loc {
                    note(out, protected, q);
                    if let Source::Computed(i) = a.source {
                        for r in &reads[i as usize] {
                            if let Loc::Offset(o) = r.loc {
                                note(out, protected, o + q);
                            }
                        }
                    }
                }
            }
            Node::Select(c, a, b) => {
                walk(arena, reads, *c, protected, seen, out);
                let lits = in_bounds_literals(arena, *c);
                let n = protected.len();
                protected.extend(lits);
                walk(arena, reads, *a, protected, seen, out);
                protected.truncate(n);
                walk(arena, reads, *b, protected, seen, out);
            }
            Node::Product(children) => {
                let lits = in_bounds_literals(arena, id);
                let n = protected.len();
                protected.extend(lits);
                for &c in children.iter() {
                    walk(arena, reads, c, protected, seen, out);
                }
                protected.truncate(n);
            }
            other => {
                for c in other.children() {
                    walk(arena, reads, c, protected, seen, out);
                }
            }
        }
    }
    let mut out = HashSet::new();
    walk(arena, computed_reads, root, &mut Vec::new(), &mut HashSet::new(), &mut out);
    let mut v: Vec<Offset> = out.into_iter().collect();
    v.sort();
    v
}

/// Multiplies a stencil residual by the conjunction of `InBounds` over its
/// unprotected reads, so that it contributes nothing where any read falls outside.
pub fn guard_residual(ctx: &mut Ctx<'_>, r: ExprId) -> ExprId {
    let offsets = unprotected_offsets(ctx.arena, &ctx.computed_reads, r);
    let mut factors: Vec<ExprId> = offsets.into_iter().map(|o| ctx.arena.in_bounds(o)).collect();
    factors.push(r);
    ctx.arena.mul(&factors)
}

/// One nonzero entry pattern of J: residual template, unknown access, symbolic partial.
#[derive(Clone, Debug)]
pub struct JEntry {
    pub template: usize,
    pub access: Access,
    pub partial: ExprId,
}

/// Per unknown (stencil domain): one expression per channel.
#[derive(Clone, Debug)]
pub struct StencilRoutines {
    pub unknown: usize,
    pub jtf: Vec<ExprId>,
    pub precond: Vec<ExprId>,
    pub jtj: Vec<ExprId>,
}

#[derive(Clone, Debug)]
pub struct SolverExprs {
    /// Guarded residual of every template (stencil) or the raw residual (graph).
    pub residuals: Vec<ExprId>,
    pub stencil: Vec<StencilRoutines>,
    pub graph: Vec<GraphRoutines>,
    pub j: Vec<JEntry>,
}

/// Builds every routine body for `spec`.
pub fn build_solver_exprs(spec: &mut ProblemSpec) -> SolverExprs {
    let templates = spec.templates.clone();
    let unknowns = spec.unknowns.clone();
    let mut ctx = Ctx::new(spec);
    let residuals: Vec<ExprId> = templates
        .iter()
        .map(|t| match t.domain {
            TemplateDomain::Stencil(_) => guard_residual(&mut ctx, t.expr),
            TemplateDomain::Graph(_) => t.expr,
        })
        .collect();

    let mut stencil = Vec::new();
    for (u, decl) in unknowns.iter().enumerate() {
        let in_domain: Vec<usize> = templates
            .iter()
            .enumerate()
            .filter(|(_, t)| t.domain == TemplateDomain::Stencil(decl.domain))
            .map(|(i, _)| i)
            .collect();
        let origin = collect_origin_residuals(&mut ctx, &residuals, &in_domain, u);
        let mut jtf = Vec::new();
        let mut precond = Vec::new();
        let mut jtj = Vec::new();
        for c in 0..decl.channels {
            let (f, m) = build_jtf_stencil(&mut ctx, &origin, u, c);
            jtf.push(f);
            precond.push(m);
            jtj.push(build_jtj_stencil(&mut ctx, &origin, u, c));
        }
        stencil.push(StencilRoutines { unknown: u, jtf, precond, jtj });
    }

    let mut graph = Vec::new();
    for (i, t) in templates.iter().enumerate() {
        if let TemplateDomain::Graph(g) = t.domain {
            graph.push(build_graph_routines(&mut ctx, i, g, residuals[i]));
        }
    }

    let j = build_j(&mut ctx, &residuals);
    SolverExprs { residuals, stencil, graph, j }
}

/// Nonzero partials of every residual, in (template, access) order.
pub fn build_j(ctx: &mut Ctx<'_>, residuals: &[ExprId]) -> Vec<JEntry> {
    let mut out = Vec::new();
    for (t, &r) in residuals.iter().enumerate() {
        for a in ctx.unknown_reads(r) {
            let var = ctx.arena.access(a);
            let partial = ctx.d(r, var);
            if !ctx.arena.is_const(partial, 0.0) {
                out.push(JEntry { template: t, access: a, partial });
            }
        }
    }
    out
}

/// Replaces every computed-array read by its (relocated) definition.
/// Used as an oracle for the cached partials.
pub fn inline_computed(spec: &mut ProblemSpec, e: ExprId) -> ExprId {
    let defs: Vec<Vec<ExprId>> = spec.computed.iter().map(|c| c.defs.clone()).collect();
    let arena = &mut spec.arena;
    let mut leaf = |ar: &mut ExprArena, n: &Node| -> Option<ExprId> {
        let Node::Access(a) = n else { return None };
        let Source::Computed(i) = a.source else { return None };
        let def = defs[i as usize][a.channel as usize];
        Some(match a.loc {
            Loc::Offset(q) => shift_exp(ar, def, q).expect("computed definitions are stencil expressions"),
            slot => {
                let mut m = HashMap::new();
                crate::simplify::canon::rebuild(ar, def, &mut m, &mut |ar, n| match n {
                    Node::Access(x) if x.loc == Loc::Offset(Offset::ZERO) => Some(ar.access(x.with_loc(slot))),
                    _ => None,
                })
            }
        })
    };
    let mut e = e;
    // Definitions may read earlier computed arrays; each round removes one level.
    while arena.has_computed(e) {
        let mut memo = HashMap::new();
        e = crate::simplify::canon::rebuild(arena, e, &mut memo, &mut leaf);
    }
    e
}
