use std::collections::HashMap;

use super::ast::{builtin_arity, Ast, BinOp, ComputedMode, Expr, ExprKind, IndexArg, Stmt, StmtKind, KEYWORDS};
use super::lexer::{tokenize, Tok, Token};
use crate::error::{Error, Pos, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Decl {
    Dim,
    Param,
    Field,
    Graph(Vec<String>),
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
    decls: HashMap<String, Decl>,
}

/// Parses a program, checking declare-before-use and builtin arities.
pub fn parse(src: &str) -> Result<Ast> {
    let mut p = Parser { toks: tokenize(src)?, at: 0, decls: HashMap::new() };
    let mut stmts = Vec::new();
    while p.peek() != &Tok::Eof {
        stmts.push(p.stmt()?);
    }
    Ok(Ast { stmts })
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.at + k).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> Error {
        Error::syntax(self.pos(), format!("expected {wanted}, found {}", self.peek().describe()))
    }

    fn expect(&mut self, tok: Tok) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let pos = self.pos();
                self.bump();
                Ok((s, pos))
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn int(&mut self) -> Result<i64> {
        match *self.peek() {
            Tok::Int(v) => {
                self.bump();
                Ok(v)
            }
            _ => Err(self.unexpected("integer literal")),
        }
    }

    fn declare(&mut self, name: &str, pos: Pos, decl: Decl) -> Result<()> {
        if KEYWORDS.contains(&name) || builtin_arity(name).is_some() {
            return Err(Error::syntax(pos, format!("`{name}` is reserved")));
        }
        if self.decls.contains_key(name) {
            return Err(Error::DuplicateDeclaration { name: name.to_string(), pos });
        }
        self.decls.insert(name.to_string(), decl);
        Ok(())
    }

    fn require(&self, name: &str, pos: Pos, ok: impl Fn(&Decl) -> bool) -> Result<()> {
        match self.decls.get(name) {
            Some(d) if ok(d) => Ok(()),
            _ => Err(Error::UndeclaredIdentifier { name: name.to_string(), pos }),
        }
    }

    fn name_list(&mut self, close: Tok) -> Result<Vec<(String, Pos)>> {
        let mut out = vec![self.ident()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            out.push(self.ident()?);
        }
        self.expect(close)?;
        Ok(out)
    }

    fn stmt(&mut self) -> Result<Stmt> {
        let pos = self.pos();
        let (kw, _) = self.ident().map_err(|_| self.unexpected("statement keyword"))?;
        let kind = match kw.as_str() {
            "dim" => {
                let (name, npos) = self.ident()?;
                let extent = self.int()?;
                self.declare(&name, npos, Decl::Dim)?;
                StmtKind::Dim { name, extent }
            }
            "param" => {
                let (name, npos) = self.ident()?;
                self.declare(&name, npos, Decl::Param)?;
                StmtKind::Param { name }
            }
            "unknown" | "array" => {
                let (name, npos) = self.ident()?;
                self.expect(Tok::LBracket)?;
                let dims = self.name_list(Tok::RBracket)?;
                for (d, dpos) in &dims {
                    self.require(d, *dpos, |k| *k == Decl::Dim)?;
                }
                let channels = if *self.peek() == Tok::Colon {
                    self.bump();
                    let cpos = self.pos();
                    let c = self.int()?;
                    if c < 1 {
                        return Err(Error::syntax(cpos, "channel count must be positive"));
                    }
                    Some(c)
                } else {
                    None
                };
                self.declare(&name, npos, Decl::Field)?;
                let dims = dims.into_iter().map(|(d, _)| d).collect();
                if kw == "unknown" {
                    StmtKind::Unknown { name, dims, channels }
                } else {
                    StmtKind::Array { name, dims, channels }
                }
            }
            "graph" => {
                let (name, npos) = self.ident()?;
                self.expect(Tok::LParen)?;
                let slots: Vec<String> = self.name_list(Tok::RParen)?.into_iter().map(|(s, _)| s).collect();
                for (i, s) in slots.iter().enumerate() {
                    if slots[..i].contains(s) {
                        return Err(Error::DuplicateDeclaration { name: format!("{name}.{s}"), pos: npos });
                    }
                }
                self.declare(&name, npos, Decl::Graph(slots.clone()))?;
                StmtKind::Graph { name, slots }
            }
            "computed" => {
                let (name, npos) = self.ident()?;
                let mode = match self.ident()?.0.as_str() {
                    "freeze" => ComputedMode::Freeze,
                    "cache" => ComputedMode::Cache,
                    _ => return Err(Error::syntax(self.toks[self.at - 1].pos, "expected `freeze` or `cache`")),
                };
                self.expect(Tok::Assign)?;
                // Declared before its body so that self-reference is reported as a cycle by lowering.
                self.declare(&name, npos, Decl::Field)?;
                let expr = self.expr()?;
                StmtKind::Computed { name, mode, expr }
            }
            "energy" => StmtKind::Energy(self.expr()?),
            "exclude" => StmtKind::Exclude(self.expr()?),
            other => return Err(Error::syntax(pos, format!("unknown statement `{other}`"))),
        };
        Ok(Stmt { kind, pos })
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let pos = self.pos();
            self.bump();
            let rhs = self.term()?;
            lhs = Expr { kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            let pos = self.pos();
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr { kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        let pos = self.pos();
        match self.peek() {
            Tok::Minus => {
                self.bump();
                let e = self.unary()?;
                Ok(Expr { kind: ExprKind::Neg(Box::new(e)), pos })
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Result<Expr> {
        let mut e = self.primary()?;
        while *self.peek() == Tok::LBracket {
            let pos = self.pos();
            self.bump();
            let k = self.int()?;
            self.expect(Tok::RBracket)?;
            e = Expr { kind: ExprKind::Channel(Box::new(e), k), pos };
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr { kind: ExprKind::Int(v), pos })
            }
            Tok::Float(v) => {
                self.bump();
                Ok(Expr { kind: ExprKind::Float(v), pos })
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.close_error(pos));
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some((lo, hi)) = builtin_arity(&name) {
                    let open = self.pos();
                    self.expect(Tok::LParen)?;
                    let args = self.call_args(open)?;
                    if args.len() < lo || hi.is_some_and(|hi| args.len() > hi) {
                        let expected = match hi {
                            Some(h) if h == lo => lo.to_string(),
                            Some(h) => format!("{lo}..{h}"),
                            None => format!("at least {lo}"),
                        };
                        return Err(Error::ArityMismatch { name, expected, got: args.len(), pos });
                    }
                    return Ok(Expr { kind: ExprKind::Call(name, args), pos });
                }
                match self.decls.get(&name) {
                    Some(Decl::Field) => {
                        let channel = if *self.peek() == Tok::LBracket && *self.peek_at(2) == Tok::RBracket {
                            self.bump();
                            let k = self.int()?;
                            self.expect(Tok::RBracket)?;
                            Some(k)
                        } else {
                            None
                        };
                        let open = self.pos();
                        self.expect(Tok::LParen)?;
                        let args = self.index_args(open)?;
                        Ok(Expr { kind: ExprKind::Access { name, channel, args }, pos })
                    }
                    Some(Decl::Param) | Some(Decl::Dim) => Ok(Expr { kind: ExprKind::Var(name), pos }),
                    Some(Decl::Graph(_)) => Err(Error::syntax(pos, format!("graph `{name}` used as a value"))),
                    None => Err(Error::UndeclaredIdentifier { name, pos }),
                }
            }
            _ => Err(self.unexpected("expression")),
        }
    }

    fn close_error(&self, open: Pos) -> Error {
        if *self.peek() == Tok::Eof {
            Error::syntax(open, "unclosed `(`")
        } else {
            self.unexpected("`,` or `)`")
        }
    }

    fn call_args(&mut self, open: Pos) -> Result<Vec<Expr>> {
        let mut args = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RParen => {
                    self.bump();
                    return Ok(args);
                }
                _ => return Err(self.close_error(open)),
            }
        }
    }

    fn index_args(&mut self, open: Pos) -> Result<Vec<IndexArg>> {
        let mut args = Vec::new();
        loop {
            let is_slot = matches!(self.peek(), Tok::Ident(n) if matches!(self.decls.get(n), Some(Decl::Graph(_))))
                && *self.peek_at(1) == Tok::Dot;
            if is_slot {
                let (graph, _) = self.ident()?;
                self.expect(Tok::Dot)?;
                let (slot, spos) = self.ident()?;
                match self.decls.get(&graph) {
                    Some(Decl::Graph(slots)) if slots.contains(&slot) => {}
                    _ => return Err(Error::UndeclaredIdentifier { name: format!("{graph}.{slot}"), pos: spos }),
                }
                args.push(IndexArg::Slot { graph, slot });
            } else {
                args.push(IndexArg::Offset(self.expr()?));
            }
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RParen => {
                    self.bump();
                    return Ok(args);
                }
                _ => return Err(self.close_error(open)),
            }
        }
    }
}
