//! Syntax tree of the energy language and its pretty-printer.
//!
//! Equality ignores source positions so that a printed and re-parsed program
//! compares equal to the original.

use std::fmt::{self, Display, Write};

use crate::error::Pos;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ast {
    pub stmts: Vec<Stmt>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ComputedMode {
    Freeze,
    Cache,
}

impl ComputedMode {
    pub fn keyword(self) -> &'static str {
        match self {
            ComputedMode::Freeze => "freeze",
            ComputedMode::Cache => "cache",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

impl PartialEq for Stmt {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StmtKind {
    Dim { name: String, extent: i64 },
    Param { name: String },
    Unknown { name: String, dims: Vec<String>, channels: Option<i64> },
    Array { name: String, dims: Vec<String>, channels: Option<i64> },
    Graph { name: String, slots: Vec<String> },
    Computed { name: String, mode: ComputedMode, expr: Expr },
    Energy(Expr),
    Exclude(Expr),
}

impl StmtKind {
    /// Name introduced by a declaration.
    pub fn declared_name(&self) -> Option<&str> {
        match self {
            StmtKind::Dim { name, .. }
            | StmtKind::Param { name }
            | StmtKind::Unknown { name, .. }
            | StmtKind::Array { name, .. }
            | StmtKind::Graph { name, .. }
            | StmtKind::Computed { name, .. } => Some(name),
            StmtKind::Energy(_) | StmtKind::Exclude(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

/// Index argument of a field access.
#[derive(Clone, Debug, PartialEq)]
pub enum IndexArg {
    Offset(Expr),
    Slot { graph: String, slot: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Float(f64),
    /// Parameter or dimension name.
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Builtin function call.
    Call(String, Vec<Expr>),
    /// Unknown, array or computed-array access; `channel` from the `X[k](..)` form.
    Access { name: String, channel: Option<i64>, args: Vec<IndexArg> },
    /// Postfix channel selection `e[k]`.
    Channel(Box<Expr>, i64),
}

/// Builtins with their accepted argument counts (`max = None` means variadic).
pub const BUILTINS: &[(&str, usize, Option<usize>)] = &[
    ("select", 3, Some(3)),
    ("inbounds", 1, None),
    ("sqrt", 1, Some(1)),
    ("sin", 1, Some(1)),
    ("cos", 1, Some(1)),
    ("exp", 1, Some(1)),
    ("log", 1, Some(1)),
    ("abs", 1, Some(1)),
    ("atan", 1, Some(1)),
    ("pow", 2, Some(2)),
    ("dot", 2, Some(2)),
    ("vec", 1, None),
    ("index", 1, Some(1)),
    ("eq", 2, Some(2)),
    ("neq", 2, Some(2)),
    ("less", 2, Some(2)),
    ("leq", 2, Some(2)),
    ("greater", 2, Some(2)),
    ("geq", 2, Some(2)),
    ("and", 2, None),
    ("or", 2, None),
    ("not", 1, Some(1)),
    ("rotate2d", 2, Some(2)),
    ("rotate3d", 2, Some(2)),
    ("slice", 3, Some(3)),
    ("normalize", 1, Some(1)),
];

pub const KEYWORDS: &[&str] = &["dim", "param", "unknown", "array", "graph", "computed", "energy", "exclude", "freeze", "cache"];

pub fn builtin_arity(name: &str) -> Option<(usize, Option<usize>)> {
    BUILTINS.iter().find(|(n, _, _)| *n == name).map(|&(_, lo, hi)| (lo, hi))
}

fn fmt_float(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

impl Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Int(v) => write!(f, "{v}"),
            ExprKind::Float(v) => f.write_str(&fmt_float(*v)),
            ExprKind::Var(n) => f.write_str(n),
            ExprKind::Neg(e) => write!(f, "(-{e})"),
            ExprKind::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            ExprKind::Call(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_char(')')
            }
            ExprKind::Access { name, channel, args } => {
                f.write_str(name)?;
                if let Some(c) = channel {
                    write!(f, "[{c}]")?;
                }
                f.write_char('(')?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    match a {
                        IndexArg::Offset(e) => write!(f, "{e}")?,
                        IndexArg::Slot { graph, slot } => write!(f, "{graph}.{slot}")?,
                    }
                }
                f.write_char(')')
            }
            ExprKind::Channel(e, k) => write!(f, "{e}[{k}]"),
        }
    }
}

impl Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let field = |f: &mut fmt::Formatter<'_>, kw: &str, name: &str, dims: &[String], ch: &Option<i64>| {
            write!(f, "{kw} {name}[{}]", dims.join(", "))?;
            if let Some(c) = ch {
                write!(f, ":{c}")?;
            }
            Ok(())
        };
        match &self.kind {
            StmtKind::Dim { name, extent } => write!(f, "dim {name} {extent}"),
            StmtKind::Param { name } => write!(f, "param {name}"),
            StmtKind::Unknown { name, dims, channels } => field(f, "unknown", name, dims, channels),
            StmtKind::Array { name, dims, channels } => field(f, "array", name, dims, channels),
            StmtKind::Graph { name, slots } => write!(f, "graph {name}({})", slots.join(", ")),
            StmtKind::Computed { name, mode, expr } => write!(f, "computed {name} {} = {expr}", mode.keyword()),
            StmtKind::Energy(e) => write!(f, "energy {e}"),
            StmtKind::Exclude(e) => write!(f, "exclude {e}"),
        }
    }
}

impl Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.stmts {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}
