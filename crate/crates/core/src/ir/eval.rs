//! Reference interpreter. Every later transformation is tested against it.

use std::collections::HashMap;

use super::{Access, BoolOp, CmpOp, ExprArena, ExprId, Exponent, Node, Offset, UnaryFn};
use crate::error::{Error, Result};
use crate::real::Real;

/// Supplies the values an expression reads at one grid element or hyperedge.
pub trait Environment<T: Real> {
    fn param(&self, index: u16) -> Option<T>;

    /// `None` when the referenced data is absent; out-of-bounds reads return `Some(0)`.
    fn access(&self, access: &Access) -> Option<T>;

    fn in_bounds(&self, offset: Offset) -> bool;

    fn coord(&self, axis: u8) -> T;
}

pub fn fold_unary(f: UnaryFn, v: f64) -> f64 {
    apply_unary(f, v)
}

pub fn fold_compare(op: CmpOp, a: f64, b: f64) -> bool {
    compare(op, a, b)
}

#[inline]
pub(crate) fn apply_unary<T: Real>(f: UnaryFn, v: T) -> T {
    match f {
        UnaryFn::Sqrt => v.sqrt(),
        UnaryFn::Sin => v.sin(),
        UnaryFn::Cos => v.cos(),
        UnaryFn::Exp => v.exp(),
        UnaryFn::Log => {
            if v > T::zero() {
                v.ln()
            } else {
                T::nan()
            }
        }
        UnaryFn::Abs => v.abs(),
        UnaryFn::Atan => v.atan(),
    }
}

#[inline]
pub(crate) fn compare<T: Real>(op: CmpOp, a: T, b: T) -> bool {
    match op {
        CmpOp::Eq => a == b,
        CmpOp::Neq => a != b,
        CmpOp::Less => a < b,
        CmpOp::Leq => a <= b,
        CmpOp::Greater => a > b,
        CmpOp::Geq => a >= b,
    }
}

#[inline]
pub(crate) fn pow<T: Real>(base: T, e: Exponent) -> T {
    if e.is_integer() {
        match i32::try_from(*e.numer()) {
            Ok(n) => base.powi(n),
            Err(_) => base.powf(T::from_f64(*e.numer() as f64)),
        }
    } else if *e.denom() == 2 && *e.numer() == 1 {
        base.sqrt()
    } else {
        base.powf(T::from_f64(*e.numer() as f64 / *e.denom() as f64))
    }
}

pub(crate) fn pow_f64(base: f64, e: Exponent) -> f64 {
    pow(base, e)
}

#[inline]
pub(crate) fn truth<T: Real>(v: T) -> bool {
    v != T::zero()
}

#[inline]
pub(crate) fn from_bool<T: Real>(b: bool) -> T {
    if b {
        T::one()
    } else {
        T::zero()
    }
}

/// Evaluates `id` under `env`.
///
/// Products check their boolean factors first and yield 0 without touching the
/// remaining factors when one is false; `Select` evaluates only the taken branch.
pub fn eval_expr<T: Real, E: Environment<T> + ?Sized>(arena: &ExprArena, id: ExprId, env: &E) -> Result<T> {
    let mut memo = HashMap::new();
    eval_expr_memo(arena, id, env, &mut memo)
}

/// As [`eval_expr`], sharing a memo table across several roots at the same element.
pub fn eval_expr_memo<T: Real, E: Environment<T> + ?Sized>(
    arena: &ExprArena,
    id: ExprId,
    env: &E,
    memo: &mut HashMap<ExprId, T>,
) -> Result<T> {
    if let Some(&v) = memo.get(&id) {
        return Ok(v);
    }
    let v = match arena.node(id) {
        Node::Const(bits) => T::from_f64(f64::from_bits(*bits)),
        Node::Param(p) => env.param(*p).ok_or_else(|| Error::DomainFault(format!("parameter #{p}")))?,
        Node::Access(a) => env.access(a).ok_or_else(|| Error::DomainFault(format!("data for {a:?}")))?,
        Node::IndexCoord(axis) => env.coord(*axis),
        Node::InBounds(o) => from_bool(env.in_bounds(*o)),
        Node::Sum(children) => {
            let mut acc = eval_expr_memo(arena, children[0], env, memo)?;
            for &c in &children[1..] {
                acc = acc + eval_expr_memo(arena, c, env, memo)?;
            }
            acc
        }
        Node::Product(children) => {
            let mut gated_off = false;
            for &c in children.iter() {
                if arena.is_boolean(c) && !truth(eval_expr_memo(arena, c, env, memo)?) {
                    gated_off = true;
                    break;
                }
            }
            if gated_off {
                T::zero()
            } else {
                let mut acc: Option<T> = None;
                for &c in children.iter().filter(|&&c| !arena.is_boolean(c)) {
                    let v = eval_expr_memo(arena, c, env, memo)?;
                    acc = Some(match acc {
                        None => v,
                        Some(a) => a * v,
                    });
                }
                acc.unwrap_or_else(T::one)
            }
        }
        Node::Pow(b, e) => pow(eval_expr_memo(arena, *b, env, memo)?, *e),
        Node::Unary(f, a) => apply_unary(*f, eval_expr_memo(arena, *a, env, memo)?),
        Node::Compare(op, a, b) => {
            let x = eval_expr_memo(arena, *a, env, memo)?;
            let y = eval_expr_memo(arena, *b, env, memo)?;
            from_bool(compare(*op, x, y))
        }
        Node::Bool(op, args) => {
            let r = match op {
                BoolOp::Not => !truth(eval_expr_memo(arena, args[0], env, memo)?),
                BoolOp::And => {
                    let mut all = true;
                    for &a in args.iter() {
                        if !truth(eval_expr_memo(arena, a, env, memo)?) {
                            all = false;
                            break;
                        }
                    }
                    all
                }
                BoolOp::Or => {
                    let mut any = false;
                    for &a in args.iter() {
                        if truth(eval_expr_memo(arena, a, env, memo)?) {
                            any = true;
                            break;
                        }
                    }
                    any
                }
            };
            from_bool(r)
        }
        Node::Select(c, a, b) => {
            if truth(eval_expr_memo(arena, *c, env, memo)?) {
                eval_expr_memo(arena, *a, env, memo)?
            } else {
                eval_expr_memo(arena, *b, env, memo)?
            }
        }
    };
    memo.insert(id, v);
    Ok(v)
}
