use std::collections::HashMap;

use super::Ctx;
use crate::error::{Error, Result};
use crate::ir::{Access, ExprArena, ExprId, Loc, Node, Offset, Source};
use crate::simplify::canon::rebuild;

/// A template re-centered so that the unknown it reads at `-shift` sits at the origin.
#[derive(Clone, Debug)]
pub struct ShiftedResidual {
    pub template: usize,
    pub shift: Offset,
    pub expr: ExprId,
}

/// Translates every offset in `e` by `s`; `IndexCoord(axis)` becomes `IndexCoord(axis) + s[axis]`.
pub fn shift_exp(arena: &mut ExprArena, e: ExprId, s: Offset) -> Result<ExprId> {
    if arena.has_slot(e) {
        return Err(Error::GraphDomain);
    }
    if s.is_zero() {
        return Ok(e);
    }
    let mut memo = HashMap::new();
    Ok(rebuild(arena, e, &mut memo, &mut |ar, n| match n {
        Node::Access(a) => match a.loc {
            Loc::Offset(o) => Some(ar.access(a.with_loc(Loc::Offset(o + s)))),
            Loc::Slot { .. } => None,
        },
        Node::InBounds(o) => Some(ar.in_bounds(*o + s)),
        Node::IndexCoord(axis) => {
            let d = s.0[*axis as usize];
            (d != 0).then(|| {
                let c = ar.index_coord(*axis);
                let k = ar.num(d as f64);
                ar.add(&[c, k])
            })
        }
        _ => None,
    }))
}

/// Every (template, shift) whose shifted copy reads unknown `unknown` at the origin.
/// One copy per distinct offset, whatever the channel. `residuals` are guarded.
pub fn collect_origin_residuals(
    ctx: &mut Ctx<'_>,
    residuals: &[ExprId],
    templates: &[usize],
    unknown: usize,
) -> Vec<ShiftedResidual> {
    let mut out = Vec::new();
    for &t in templates {
        let mut offsets: Vec<Offset> = ctx
            .unknown_reads(residuals[t])
            .into_iter()
            .filter(|a| a.source == Source::Unknown(unknown as u16))
            .filter_map(|a| a.loc.offset())
            .collect();
        offsets.sort();
        offsets.dedup();
        for o in offsets {
            let shift = -o;
            let moved = shift_exp(ctx.arena, residuals[t], shift).expect("stencil template");
            // The residual's own element must exist, even if it never reads its origin.
            let here = ctx.arena.in_bounds(shift);
            let expr = ctx.arena.mul(&[here, moved]);
            out.push(ShiftedResidual { template: t, shift, expr });
        }
    }
    out
}

fn origin(unknown: usize, channel: usize) -> Access {
    Access { source: Source::Unknown(unknown as u16), channel: channel as u16, loc: Loc::Offset(Offset::ZERO) }
}

/// `-2 Σ (dr/dx00) r` and `2 Σ (dr/dx00)²` over the origin residuals.
pub fn build_jtf_stencil(ctx: &mut Ctx<'_>, origin_residuals: &[ShiftedResidual], unknown: usize, channel: usize) -> (ExprId, ExprId) {
    let x00 = ctx.arena.access(origin(unknown, channel));
    let mut jtf = Vec::new();
    let mut pre = Vec::new();
    for r in origin_residuals {
        let d = ctx.d(r.expr, x00);
        if ctx.arena.is_const(d, 0.0) {
            continue;
        }
        jtf.push(ctx.arena.mul(&[d, r.expr]));
        pre.push(ctx.arena.powi(d, 2));
    }
    let m2 = ctx.arena.num(-2.0);
    let two = ctx.arena.num(2.0);
    let s = ctx.arena.add(&jtf);
    let f = ctx.arena.mul(&[m2, s]);
    let p = ctx.arena.add(&pre);
    let m = ctx.arena.mul(&[two, p]);
    (f, m)
}

/// `2 Σ_r (dr/dx00) Σ_u (dr/du) P(u)` over the origin residuals.
pub fn build_jtj_stencil(ctx: &mut Ctx<'_>, origin_residuals: &[ShiftedResidual], unknown: usize, channel: usize) -> ExprId {
    let x00 = ctx.arena.access(origin(unknown, channel));
    let mut terms = Vec::new();
    for r in origin_residuals {
        let d = ctx.d(r.expr, x00);
        if ctx.arena.is_const(d, 0.0) {
            continue;
        }
        let mut jp = Vec::new();
        for u in ctx.unknown_reads(r.expr) {
            let var = ctx.arena.access(u);
            let du = ctx.d(r.expr, var);
            if ctx.arena.is_const(du, 0.0) {
                continue;
            }
            let p = ctx.direction(u);
            jp.push(ctx.arena.mul(&[du, p]));
        }
        let jp = ctx.arena.add(&jp);
        terms.push(ctx.arena.mul(&[d, jp]));
    }
    let two = ctx.arena.num(2.0);
    let s = ctx.arena.add(&terms);
    ctx.arena.mul(&[two, s])
}
