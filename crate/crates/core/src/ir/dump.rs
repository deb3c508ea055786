use std::fmt::Write;

use super::{Access, ExprArena, ExprId, Loc, Node, Source};

fn access_text(a: &Access) -> String {
    let src = match a.source {
        Source::Unknown(i) => format!("unknown#{i}"),
        Source::Array(i) => format!("array#{i}"),
        Source::Computed(i) => format!("computed#{i}"),
        Source::Direction(i) => format!("dir#{i}"),
    };
    let loc = match a.loc {
        Loc::Offset(o) => format!("{o}"),
        Loc::Slot { graph, slot } => format!("g{graph}.s{slot}"),
    };
    format!("{src}[{}]{loc}", a.channel)
}

/// One line per node reachable from `roots`, `id kind args…`, in topological order.
pub fn dump(arena: &ExprArena, roots: &[ExprId]) -> String {
    let mut out = String::new();
    for id in arena.reachable(roots) {
        let ids = |c: &[ExprId]| c.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
        let text = match arena.node(id) {
            Node::Const(bits) => format!("const {:?}", f64::from_bits(*bits)),
            Node::Param(p) => format!("param #{p}"),
            Node::Access(a) => format!("access {}", access_text(a)),
            Node::IndexCoord(axis) => format!("index {axis}"),
            Node::Sum(c) => format!("sum {}", ids(c)),
            Node::Product(c) => format!("product {}", ids(c)),
            Node::Pow(b, e) => format!("pow {b} {e}"),
            Node::Unary(f, a) => format!("{} {a}", f.name()),
            Node::Compare(op, a, b) => format!("{} {a} {b}", op.name()),
            Node::Bool(op, c) => format!("{} {}", op.name(), ids(c)),
            Node::InBounds(o) => format!("inbounds {o}"),
            Node::Select(c, a, b) => format!("select {c} {a} {b}"),
        };
        let _ = writeln!(out, "{id} {text}");
    }
    out
}
