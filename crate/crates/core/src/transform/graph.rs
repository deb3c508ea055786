use super::Ctx;
use crate::ir::{Access, ExprId};

/// Contribution `expr` to be added into the solver vector entry of `target`.
#[derive(Clone, Debug)]
pub struct Scatter {
    pub target: Access,
    pub expr: ExprId,
}

/// Scatter lists of one graph template.
#[derive(Clone, Debug)]
pub struct GraphRoutines {
    pub template: usize,
    pub graph: usize,
    pub residual: ExprId,
    /// `Σ_u (dr/du) P(u)`: this hyperedge's entry of `Jp`.
    pub jp: ExprId,
    pub jtf: Vec<Scatter>,
    pub precond: Vec<Scatter>,
    pub jtj: Vec<Scatter>,
}

pub fn build_graph_routines(ctx: &mut Ctx<'_>, template: usize, graph: usize, residual: ExprId) -> GraphRoutines {
    let mut partials = Vec::new();
    for u in ctx.unknown_reads(residual) {
        let var = ctx.arena.access(u);
        let d = ctx.d(residual, var);
        if !ctx.arena.is_const(d, 0.0) {
            partials.push((u, d));
        }
    }
    let mut jp_terms = Vec::new();
    for &(u, d) in &partials {
        let p = ctx.direction(u);
        jp_terms.push(ctx.arena.mul(&[d, p]));
    }
    let jp = ctx.arena.add(&jp_terms);
    let two = ctx.arena.num(2.0);
    let m2 = ctx.arena.num(-2.0);
    let mut jtf = Vec::new();
    let mut precond = Vec::new();
    let mut jtj = Vec::new();
    for &(u, d) in &partials {
        jtf.push(Scatter { target: u, expr: ctx.arena.mul(&[m2, d, residual]) });
        let d2 = ctx.arena.powi(d, 2);
        precond.push(Scatter { target: u, expr: ctx.arena.mul(&[two, d2]) });
        jtj.push(Scatter { target: u, expr: ctx.arena.mul(&[two, d, jp]) });
    }
    GraphRoutines { template, graph, residual, jp, jtf, precond, jtj }
}
