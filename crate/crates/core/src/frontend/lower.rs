//! AST to scalar IR.

use std::collections::HashMap;

use super::ast::{Ast, BinOp, ComputedMode, Expr, ExprKind, IndexArg, StmtKind};
use super::problem::*;
use crate::autodiff::{derivative, ComputedInfo, DerivativeCache};
use crate::error::{Error, Pos, Result};
use crate::ir::{Access, CmpOp, ExprArena, ExprId, Loc, Node, Offset, Source, UnaryFn, MAX_RANK};
use crate::simplify::canon::exponent_from_f64;

#[derive(Clone, Copy, Debug)]
enum Sym {
    Dim(usize),
    Param(u16),
    Unknown(u16),
    Array(u16),
    Computed(u16),
    Graph(u16),
}

#[derive(Clone, Debug)]
enum Value {
    S(ExprId),
    V(Vec<ExprId>),
}

impl Value {
    fn components(&self) -> Vec<ExprId> {
        match self {
            Value::S(e) => vec![*e],
            Value::V(v) => v.clone(),
        }
    }

    fn from_vec(v: Vec<ExprId>) -> Value {
        if v.len() == 1 {
            Value::S(v[0])
        } else {
            Value::V(v)
        }
    }
}

struct Lowerer<'o> {
    spec: ProblemSpec,
    overrides: &'o [(String, usize)],
    syms: HashMap<String, Sym>,
    /// Index of the computed array whose definition is being lowered.
    defining: Option<u16>,
}

/// Lowers a parsed program with the declared dimension extents.
pub fn lower(ast: &Ast) -> Result<ProblemSpec> {
    lower_with_dims(ast, &[])
}

/// Lowers a parsed program, replacing the extents of the named dimensions.
pub fn lower_with_dims(ast: &Ast, overrides: &[(String, usize)]) -> Result<ProblemSpec> {
    let mut l = Lowerer { spec: ProblemSpec::default(), syms: HashMap::new(), defining: None, overrides };
    for stmt in &ast.stmts {
        l.stmt(&stmt.kind, stmt.pos)?;
    }
    for (name, _) in overrides {
        if !matches!(l.syms.get(name), Some(Sym::Dim(_))) {
            return Err(Error::Bind(format!("no dimension named `{name}`")));
        }
    }
    Ok(l.spec)
}

fn type_err(pos: Pos, msg: impl Into<String>) -> Error {
    Error::Type { pos, msg: msg.into() }
}

impl Lowerer<'_> {
    fn domain_of(&mut self, dims: &[String], pos: Pos) -> Result<DomainId> {
        if dims.len() > MAX_RANK {
            return Err(type_err(pos, format!("at most {MAX_RANK} dimensions are supported")));
        }
        let idx: Vec<usize> = dims
            .iter()
            .map(|d| match self.syms.get(d) {
                Some(Sym::Dim(i)) => Ok(*i),
                _ => Err(Error::UndeclaredIdentifier { name: d.clone(), pos }),
            })
            .collect::<Result<_>>()?;
        if let Some(i) = self.spec.domains.iter().position(|d| d.dims == idx) {
            return Ok(i);
        }
        self.spec.domains.push(Domain { dims: idx });
        Ok(self.spec.domains.len() - 1)
    }

    fn declare(&mut self, name: &str, sym: Sym, pos: Pos) -> Result<()> {
        if self.syms.insert(name.to_string(), sym).is_some() {
            return Err(Error::DuplicateDeclaration { name: name.to_string(), pos });
        }
        Ok(())
    }

    fn stmt(&mut self, kind: &StmtKind, pos: Pos) -> Result<()> {
        match kind {
            StmtKind::Dim { name, extent } => {
                if *extent < 0 {
                    return Err(type_err(pos, "dimension extent must be non-negative"));
                }
                let extent = match self.overrides.iter().find(|(n, _)| n == name) {
                    Some(&(_, e)) => e,
                    None => *extent as usize,
                };
                self.spec.dims.push(DimDecl { name: name.clone(), extent });
                self.declare(name, Sym::Dim(self.spec.dims.len() - 1), pos)
            }
            StmtKind::Param { name } => {
                self.spec.params.push(name.clone());
                self.declare(name, Sym::Param(self.spec.params.len() as u16 - 1), pos)
            }
            StmtKind::Unknown { name, dims, channels } | StmtKind::Array { name, dims, channels } => {
                let domain = self.domain_of(dims, pos)?;
                let decl = FieldDecl { name: name.clone(), channels: channels.unwrap_or(1) as usize, domain };
                if matches!(kind, StmtKind::Unknown { .. }) {
                    self.spec.unknowns.push(decl);
                    self.declare(name, Sym::Unknown(self.spec.unknowns.len() as u16 - 1), pos)
                } else {
                    self.spec.arrays.push(decl);
                    self.declare(name, Sym::Array(self.spec.arrays.len() as u16 - 1), pos)
                }
            }
            StmtKind::Graph { name, slots } => {
                self.spec.graphs.push(GraphDecl {
                    name: name.clone(),
                    slots: slots.clone(),
                    slot_domains: vec![None; slots.len()],
                });
                self.declare(name, Sym::Graph(self.spec.graphs.len() as u16 - 1), pos)
            }
            StmtKind::Computed { name, mode, expr } => self.computed(name, *mode, expr, pos),
            StmtKind::Energy(e) => {
                let comps = self.expr(e)?.components();
                let base = self.spec.templates.len();
                for (c, r) in comps.iter().enumerate() {
                    let domain = self.classify(*r, pos)?;
                    let name = if comps.len() == 1 {
                        format!("energy{}", base)
                    } else {
                        format!("energy{}.{}", base, c)
                    };
                    self.spec.templates.push(Template { name, domain, expr: *r });
                }
                Ok(())
            }
            StmtKind::Exclude(e) => {
                let v = match self.expr(e)? {
                    Value::S(v) => v,
                    Value::V(_) => return Err(type_err(pos, "exclude expects a scalar predicate")),
                };
                let domain = match self.classify(v, pos)? {
                    TemplateDomain::Stencil(d) => d,
                    TemplateDomain::Graph(_) => return Err(type_err(pos, "exclude predicates are grid expressions")),
                };
                self.spec.excludes.push(Exclusion { domain, predicate: v });
                Ok(())
            }
        }
    }

    fn computed(&mut self, name: &str, mode: ComputedMode, expr: &Expr, pos: Pos) -> Result<()> {
        let index = self.spec.computed.len() as u16;
        self.declare(name, Sym::Computed(index), pos)?;
        // Placeholder so that lookups during the body resolve; finalized below.
        self.spec.computed.push(ComputedDecl {
            name: name.to_string(),
            mode,
            domain: 0,
            defs: Vec::new(),
            unknown_accesses: Vec::new(),
            partials: Vec::new(),
        });
        self.defining = Some(index);
        let lowered = self.expr(expr);
        self.defining = None;
        let defs = lowered?.components();
        let mut domain = None;
        for &d in &defs {
            match self.classify(d, pos)? {
                TemplateDomain::Stencil(dom) if domain.is_none_or(|x| x == dom) => domain = Some(dom),
                TemplateDomain::Stencil(_) => {
                    return Err(Error::DomainMismatch(format!("channels of `{name}` live on different domains")))
                }
                TemplateDomain::Graph(_) => return Err(type_err(pos, "computed arrays are defined over grid domains")),
            }
        }
        let arena = &self.spec.arena;
        let mut unknown_accesses: Vec<Access> = Vec::new();
        for &d in &defs {
            for a in arena.accesses(d) {
                if matches!(a.source, Source::Unknown(_)) && !unknown_accesses.contains(&a) {
                    unknown_accesses.push(a);
                }
                if let Source::Computed(j) = a.source {
                    if mode == ComputedMode::Cache && self.spec.computed[j as usize].mode == ComputedMode::Cache {
                        return Err(type_err(pos, format!("cache array `{name}` may not read another cache array")));
                    }
                }
            }
        }
        unknown_accesses.sort();
        let mut partials = Vec::new();
        if mode == ComputedMode::Cache {
            let infos: Vec<ComputedInfo> = self.spec.computed.iter().map(ComputedInfo::from_decl).collect();
            let mut cache = DerivativeCache::new();
            for &d in &defs {
                let mut row = Vec::with_capacity(unknown_accesses.len());
                for &a in &unknown_accesses {
                    let var = self.spec.arena.access(a);
                    row.push(derivative(&mut self.spec.arena, &infos, d, var, &mut cache));
                }
                partials.push(row);
            }
        }
        let c = &mut self.spec.computed[index as usize];
        c.domain = domain.expect("classify rejects expressions without a domain");
        c.defs = defs;
        c.unknown_accesses = unknown_accesses;
        c.partials = partials;
        Ok(())
    }

    /// Determines whether a lowered scalar is a stencil or a graph expression.
    fn classify(&mut self, e: ExprId, pos: Pos) -> Result<TemplateDomain> {
        let arena = &self.spec.arena;
        let mut stencil: Option<DomainId> = None;
        let mut graph: Option<u16> = None;
        let mut positional = false;
        for id in arena.reachable(&[e]) {
            match arena.node(id) {
                Node::InBounds(_) | Node::IndexCoord(_) => positional = true,
                Node::Access(a) => {
                    let (fname, _, dom) = self.spec.field(a.source).expect("lowered access names a declared field");
                    match a.loc {
                        Loc::Offset(_) => match stencil {
                            None => stencil = Some(dom),
                            Some(d) if d == dom => {}
                            Some(d) => {
                                return Err(Error::DomainMismatch(format!(
                                    "expression at {pos} reads `{fname}` on {} and data on {}",
                                    self.spec.domain_name(dom),
                                    self.spec.domain_name(d)
                                )))
                            }
                        },
                        Loc::Slot { graph: g, .. } => match graph {
                            None => graph = Some(g),
                            Some(h) if h == g => {}
                            Some(_) => return Err(Error::MixedDomain { pos }),
                        },
                    }
                }
                _ => {}
            }
        }
        match (stencil, graph) {
            (Some(_), Some(_)) => Err(Error::MixedDomain { pos }),
            (None, Some(_)) if positional => Err(Error::MixedDomain { pos }),
            (None, Some(g)) => Ok(TemplateDomain::Graph(g as usize)),
            (Some(d), None) => Ok(TemplateDomain::Stencil(d)),
            (None, None) => {
                // Position-only or constant: fall back to the sole unknown domain.
                let mut doms: Vec<DomainId> = self.spec.unknowns.iter().map(|u| u.domain).collect();
                doms.dedup();
                match doms.as_slice() {
                    [d] => Ok(TemplateDomain::Stencil(*d)),
                    _ => Err(Error::DomainMismatch(format!("expression at {pos} reads no data to infer its domain"))),
                }
            }
        }
    }

    fn const_int(&mut self, e: &Expr, name: &str) -> Result<i64> {
        let v = self.expr(e)?;
        let err = || Error::NonConstantOffset { name: name.to_string(), pos: e.pos };
        match v {
            Value::S(id) => match self.spec.arena.const_value(id) {
                Some(c) if c.fract() == 0.0 && c.abs() < 1e9 => Ok(c as i64),
                _ => Err(err()),
            },
            Value::V(_) => Err(err()),
        }
    }

    fn scalar(&mut self, e: &Expr, what: &str) -> Result<ExprId> {
        match self.expr(e)? {
            Value::S(v) => Ok(v),
            Value::V(v) => Err(type_err(e.pos, format!("{what} expects a scalar, got a {}-vector", v.len()))),
        }
    }

    fn vector(&mut self, e: &Expr, len: usize, what: &str) -> Result<Vec<ExprId>> {
        let v = self.expr(e)?.components();
        if v.len() != len {
            return Err(type_err(e.pos, format!("{what} expects a {len}-vector, got {} component(s)", v.len())));
        }
        Ok(v)
    }

    fn elementwise(&mut self, a: Value, b: Value, pos: Pos, f: fn(&mut ExprArena, ExprId, ExprId) -> ExprId) -> Result<Value> {
        let ar = &mut self.spec.arena;
        Ok(match (a, b) {
            (Value::S(x), Value::S(y)) => Value::S(f(ar, x, y)),
            (Value::S(x), Value::V(v)) => Value::V(v.into_iter().map(|y| f(ar, x, y)).collect()),
            (Value::V(v), Value::S(y)) => Value::V(v.into_iter().map(|x| f(ar, x, y)).collect()),
            (Value::V(u), Value::V(v)) => {
                if u.len() != v.len() {
                    return Err(type_err(pos, format!("vector lengths {} and {} differ", u.len(), v.len())));
                }
                Value::V(u.into_iter().zip(v).map(|(x, y)| f(ar, x, y)).collect())
            }
        })
    }

    fn map(&mut self, v: Value, f: impl Fn(&mut ExprArena, ExprId) -> ExprId) -> Value {
        let ar = &mut self.spec.arena;
        match v {
            Value::S(x) => Value::S(f(ar, x)),
            Value::V(v) => Value::V(v.into_iter().map(|x| f(ar, x)).collect()),
        }
    }

    fn expr(&mut self, e: &Expr) -> Result<Value> {
        let pos = e.pos;
        match &e.kind {
            ExprKind::Int(v) => Ok(Value::S(self.spec.arena.num(*v as f64))),
            ExprKind::Float(v) => Ok(Value::S(self.spec.arena.num(*v))),
            ExprKind::Var(name) => match self.syms.get(name) {
                Some(Sym::Param(p)) => {
                    let p = *p;
                    Ok(Value::S(self.spec.arena.param(p)))
                }
                Some(Sym::Dim(d)) => {
                    let extent = self.spec.dims[*d].extent as f64;
                    Ok(Value::S(self.spec.arena.num(extent)))
                }
                _ => Err(Error::UndeclaredIdentifier { name: name.clone(), pos }),
            },
            ExprKind::Neg(a) => {
                let v = self.expr(a)?;
                Ok(self.map(v, |ar, x| ar.neg(x)))
            }
            ExprKind::Binary(op, a, b) => {
                let x = self.expr(a)?;
                let y = self.expr(b)?;
                let f: fn(&mut ExprArena, ExprId, ExprId) -> ExprId = match op {
                    BinOp::Add => ExprArena::add2,
                    BinOp::Sub => ExprArena::sub,
                    BinOp::Mul => ExprArena::mul2,
                    BinOp::Div => ExprArena::div,
                };
                if matches!(op, BinOp::Div) && matches!(y, Value::V(_)) {
                    return Err(type_err(pos, "cannot divide by a vector"));
                }
                self.elementwise(x, y, pos, f)
            }
            ExprKind::Channel(inner, k) => {
                let v = self.expr(inner)?.components();
                match usize::try_from(*k).ok().and_then(|k| v.get(k)) {
                    Some(&c) => Ok(Value::S(c)),
                    None => Err(type_err(pos, format!("channel {k} out of range for {} component(s)", v.len()))),
                }
            }
            ExprKind::Access { name, channel, args } => self.access(name, *channel, args, pos),
            ExprKind::Call(name, args) => self.call(name, args, pos),
        }
    }

    fn access(&mut self, name: &str, channel: Option<i64>, args: &[IndexArg], pos: Pos) -> Result<Value> {
        let (source, channels, domain) = match self.syms.get(name) {
            Some(Sym::Unknown(i)) => {
                let f = &self.spec.unknowns[*i as usize];
                (Source::Unknown(*i), f.channels, f.domain)
            }
            Some(Sym::Array(i)) => {
                let f = &self.spec.arrays[*i as usize];
                (Source::Array(*i), f.channels, f.domain)
            }
            Some(Sym::Computed(i)) => {
                if self.defining == Some(*i) {
                    return Err(Error::CyclicComputedArray(name.to_string()));
                }
                let c = &self.spec.computed[*i as usize];
                (Source::Computed(*i), c.value_channels(), c.domain)
            }
            _ => return Err(Error::UndeclaredIdentifier { name: name.to_string(), pos }),
        };
        let rank = self.spec.domains[domain].dims.len();
        let loc = match args {
            [IndexArg::Slot { graph, slot }] => {
                let g = match self.syms.get(graph) {
                    Some(Sym::Graph(g)) => *g,
                    _ => return Err(Error::UndeclaredIdentifier { name: graph.clone(), pos }),
                };
                let decl = &mut self.spec.graphs[g as usize];
                let s = decl.slots.iter().position(|x| x == slot).ok_or_else(|| Error::UndeclaredIdentifier {
                    name: format!("{graph}.{slot}"),
                    pos,
                })?;
                match decl.slot_domains[s] {
                    None => decl.slot_domains[s] = Some(domain),
                    Some(d) if d == domain => {}
                    Some(d) => {
                        let msg = format!(
                            "slot {graph}.{slot} indexes {} but `{name}` lives on {}",
                            self.spec.domain_name(d),
                            self.spec.domain_name(domain)
                        );
                        return Err(Error::DomainMismatch(msg));
                    }
                }
                Loc::Slot { graph: g, slot: s as u16 }
            }
            _ => {
                if args.iter().any(|a| matches!(a, IndexArg::Slot { .. })) {
                    return Err(Error::MixedDomain { pos });
                }
                if args.len() != rank {
                    return Err(type_err(pos, format!("`{name}` has {rank} dimension(s), got {} index(es)", args.len())));
                }
                let mut o = [0i32; MAX_RANK];
                for (i, a) in args.iter().enumerate() {
                    if let IndexArg::Offset(e) = a {
                        o[i] = self.const_int(e, name)? as i32;
                    }
                }
                Loc::Offset(Offset(o))
            }
        };
        let make = |ar: &mut ExprArena, c: usize| ar.access(Access { source, channel: c as u16, loc });
        match channel {
            Some(k) => {
                if k < 0 || k as usize >= channels {
                    return Err(type_err(pos, format!("channel {k} out of range for `{name}` with {channels}")));
                }
                Ok(Value::S(make(&mut self.spec.arena, k as usize)))
            }
            None => {
                let comps = (0..channels).map(|c| make(&mut self.spec.arena, c)).collect();
                Ok(Value::from_vec(comps))
            }
        }
    }

    fn call(&mut self, name: &str, args: &[Expr], pos: Pos) -> Result<Value> {
        let unary = |f: UnaryFn| f;
        match name {
            "select" => {
                let c = self.scalar(&args[0], "select condition")?;
                let a = self.expr(&args[1])?;
                let b = self.expr(&args[2])?;
                let c = self.spec.arena.truthy(c);
                let va = a.components();
                let vb = b.components();
                let n = va.len().max(vb.len());
                if (va.len() != n && va.len() != 1) || (vb.len() != n && vb.len() != 1) {
                    return Err(type_err(pos, "select branches have different lengths"));
                }
                let out = (0..n)
                    .map(|i| {
                        let x = va[if va.len() == 1 { 0 } else { i }];
                        let y = vb[if vb.len() == 1 { 0 } else { i }];
                        self.spec.arena.select(c, x, y)
                    })
                    .collect();
                Ok(Value::from_vec(out))
            }
            "inbounds" => {
                if args.len() > MAX_RANK {
                    return Err(type_err(pos, format!("inbounds takes at most {MAX_RANK} offsets")));
                }
                let mut o = [0i32; MAX_RANK];
                for (i, a) in args.iter().enumerate() {
                    o[i] = self.const_int(a, "inbounds")? as i32;
                }
                Ok(Value::S(self.spec.arena.in_bounds(Offset(o))))
            }
            "sqrt" | "sin" | "cos" | "exp" | "log" | "abs" | "atan" => {
                let f = unary(match name {
                    "sqrt" => UnaryFn::Sqrt,
                    "sin" => UnaryFn::Sin,
                    "cos" => UnaryFn::Cos,
                    "exp" => UnaryFn::Exp,
                    "log" => UnaryFn::Log,
                    "abs" => UnaryFn::Abs,
                    _ => UnaryFn::Atan,
                });
                let v = self.expr(&args[0])?;
                Ok(self.map(v, |ar, x| ar.unary(f, x)))
            }
            "pow" => {
                let v = self.expr(&args[0])?;
                let k = self.scalar(&args[1], "pow exponent")?;
                let e = self
                    .spec
                    .arena
                    .const_value(k)
                    .and_then(exponent_from_f64)
                    .ok_or(Error::NonConstantExponent { pos: args[1].pos })?;
                Ok(self.map(v, |ar, x| ar.pow(x, e)))
            }
            "dot" => {
                let a = self.expr(&args[0])?.components();
                let b = self.expr(&args[1])?.components();
                if a.len() != b.len() {
                    return Err(type_err(pos, format!("dot of lengths {} and {}", a.len(), b.len())));
                }
                Ok(Value::S(self.dot(&a, &b)))
            }
            "vec" => {
                let mut out = Vec::new();
                for a in args {
                    out.extend(self.expr(a)?.components());
                }
                Ok(Value::V(out))
            }
            "index" => {
                let axis = self.const_int(&args[0], "index")?;
                if !(0..MAX_RANK as i64).contains(&axis) {
                    return Err(type_err(pos, format!("axis {axis} out of range")));
                }
                Ok(Value::S(self.spec.arena.index_coord(axis as u8)))
            }
            "eq" | "neq" | "less" | "leq" | "greater" | "geq" => {
                let op = match name {
                    "eq" => CmpOp::Eq,
                    "neq" => CmpOp::Neq,
                    "less" => CmpOp::Less,
                    "leq" => CmpOp::Leq,
                    "greater" => CmpOp::Greater,
                    _ => CmpOp::Geq,
                };
                let a = self.scalar(&args[0], name)?;
                let b = self.scalar(&args[1], name)?;
                Ok(Value::S(self.spec.arena.compare(op, a, b)))
            }
            "and" | "or" => {
                let xs: Vec<ExprId> = args.iter().map(|a| self.scalar(a, name)).collect::<Result<_>>()?;
                Ok(Value::S(if name == "and" { self.spec.arena.and(&xs) } else { self.spec.arena.or(&xs) }))
            }
            "not" => {
                let a = self.scalar(&args[0], "not")?;
                Ok(Value::S(self.spec.arena.not(a)))
            }
            "rotate2d" => {
                let t = self.scalar(&args[0], "rotate2d angle")?;
                let v = self.vector(&args[1], 2, "rotate2d")?;
                let ar = &mut self.spec.arena;
                let c = ar.unary(UnaryFn::Cos, t);
                let s = ar.unary(UnaryFn::Sin, t);
                let cu = ar.mul2(c, v[0]);
                let sv = ar.mul2(s, v[1]);
                let su = ar.mul2(s, v[0]);
                let cv = ar.mul2(c, v[1]);
                Ok(Value::V(vec![ar.sub(cu, sv), ar.add2(su, cv)]))
            }
            "rotate3d" => {
                let a = self.vector(&args[0], 3, "rotate3d angles")?;
                let v = self.vector(&args[1], 3, "rotate3d")?;
                let r = self.rotation3(&a);
                let out = (0..3).map(|i| self.dot(&r[i], &v)).collect();
                Ok(Value::V(out))
            }
            "slice" => {
                let v = self.expr(&args[0])?.components();
                let lo = self.const_int(&args[1], "slice")?;
                let hi = self.const_int(&args[2], "slice")?;
                if lo < 0 || hi <= lo || hi as usize > v.len() {
                    return Err(type_err(pos, format!("slice {lo}..{hi} out of range for {} component(s)", v.len())));
                }
                Ok(Value::from_vec(v[lo as usize..hi as usize].to_vec()))
            }
            "normalize" => {
                let v = self.expr(&args[0])?.components();
                let n2 = self.dot(&v, &v);
                let ar = &mut self.spec.arena;
                let inv = ar.pow(n2, crate::ir::Exponent::new(-1, 2));
                Ok(Value::from_vec(v.iter().map(|&x| ar.mul2(x, inv)).collect()))
            }
            other => Err(type_err(pos, format!("unknown builtin `{other}`"))),
        }
    }

    fn dot(&mut self, a: &[ExprId], b: &[ExprId]) -> ExprId {
        let ar = &mut self.spec.arena;
        let terms: Vec<ExprId> = a.iter().zip(b).map(|(&x, &y)| ar.mul2(x, y)).collect();
        ar.add(&terms)
    }

    /// Rows of Rz(a2) * Ry(a1) * Rx(a0).
    fn rotation3(&mut self, a: &[ExprId]) -> [[ExprId; 3]; 3] {
        let ar = &mut self.spec.arena;
        let (sa, ca) = (ar.unary(UnaryFn::Sin, a[0]), ar.unary(UnaryFn::Cos, a[0]));
        let (sb, cb) = (ar.unary(UnaryFn::Sin, a[1]), ar.unary(UnaryFn::Cos, a[1]));
        let (sg, cg) = (ar.unary(UnaryFn::Sin, a[2]), ar.unary(UnaryFn::Cos, a[2]));
        let m = |ar: &mut ExprArena, f: &[ExprId]| ar.mul(f);
        let r00 = m(ar, &[cg, cb]);
        let t1 = m(ar, &[sg, ca]);
        let t2 = m(ar, &[cg, sb, sa]);
        let r01 = ar.sub(t2, t1);
        let t3 = m(ar, &[sg, sa]);
        let t4 = m(ar, &[cg, sb, ca]);
        let r02 = ar.add2(t3, t4);
        let r10 = m(ar, &[sg, cb]);
        let t5 = m(ar, &[cg, ca]);
        let t6 = m(ar, &[sg, sb, sa]);
        let r11 = ar.add2(t5, t6);
        let t7 = m(ar, &[cg, sa]);
        let t8 = m(ar, &[sg, sb, ca]);
        let r12 = ar.sub(t8, t7);
        let r20 = ar.neg(sb);
        let r21 = m(ar, &[cb, sa]);
        let r22 = m(ar, &[cb, ca]);
        [[r00, r01, r02], [r10, r11, r12], [r20, r21, r22]]
    }
}
