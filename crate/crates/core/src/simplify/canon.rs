//! Polynomial canonical form.
//!
//! Sums and products are flat and n-ary with children in the arena's canonical
//! order. `a - b` is `a + (-1)*b`, `a / b` is `a * b^-1`, numeric coefficients and
//! exponents of equal terms are merged, and positive powers of booleans collapse
//! to the boolean itself. Products are never distributed over sums.

use std::collections::HashMap;

use crate::ir::{Access, BoolOp, CmpOp, ExprArena, ExprId, Exponent, Node, Offset, UnaryFn};

fn integer(e: Exponent) -> Option<i64> {
    e.is_integer().then(|| *e.numer())
}

/// Best rational approximation with a bounded denominator, if it reproduces `v` exactly.
pub fn exponent_from_f64(v: f64) -> Option<Exponent> {
    if !v.is_finite() {
        return None;
    }
    if v.fract() == 0.0 && v.abs() < i32::MAX as f64 {
        return Some(Exponent::from_integer(v as i64));
    }
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut x = v;
    for _ in 0..40 {
        let a = x.floor();
        if a.abs() > 1e12 {
            break;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > 1_000_000 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if h1 as f64 / k1 as f64 == v {
            return Some(Exponent::new(h1, k1));
        }
        let frac = x - x.floor();
        if frac == 0.0 {
            break;
        }
        x = 1.0 / frac;
    }
    None
}

impl ExprArena {
    pub fn param(&mut self, index: u16) -> ExprId {
        self.intern(Node::Param(index))
    }

    pub fn access(&mut self, access: Access) -> ExprId {
        self.intern(Node::Access(access))
    }

    pub fn in_bounds(&mut self, offset: Offset) -> ExprId {
        self.intern(Node::InBounds(offset))
    }

    pub fn index_coord(&mut self, axis: u8) -> ExprId {
        self.intern(Node::IndexCoord(axis))
    }

    /// Splits a term into numeric coefficient and symbolic part (`None` for constants).
    fn split_coefficient(&mut self, id: ExprId) -> (f64, Option<ExprId>) {
        if let Some(c) = self.const_value(id) {
            return (c, None);
        }
        if let Node::Product(children) = self.node(id) {
            if let Some(c) = self.const_value(children[0]) {
                let rest: Vec<ExprId> = children[1..].to_vec();
                return (c, Some(self.intern(Node::Product(rest.into()))));
            }
        }
        (1.0, Some(id))
    }

    fn flatten_into(&self, id: ExprId, sum: bool, out: &mut Vec<ExprId>) {
        match (self.node(id), sum) {
            (Node::Sum(c), true) | (Node::Product(c), false) => {
                for &c in c.iter() {
                    self.flatten_into(c, sum, out);
                }
            }
            _ => out.push(id),
        }
    }

    pub fn add(&mut self, terms: &[ExprId]) -> ExprId {
        let mut flat = Vec::with_capacity(terms.len());
        for &t in terms {
            self.flatten_into(t, true, &mut flat);
        }
        let mut constant = 0.0;
        let mut keys: Vec<(ExprId, f64)> = Vec::new();
        let mut index: HashMap<ExprId, usize> = HashMap::new();
        for t in flat {
            match self.split_coefficient(t) {
                (c, None) => constant += c,
                (c, Some(key)) => match index.get(&key) {
                    Some(&i) => keys[i].1 += c,
                    None => {
                        index.insert(key, keys.len());
                        keys.push((key, c));
                    }
                },
            }
        }
        if keys.iter().any(|&(k, c)| c == 1.0 && matches!(self.node(k), Node::Sum(_))) {
            // A coefficient cancelled down to 1 and exposed a nested sum.
            let mut again = Vec::new();
            for &(k, c) in &keys {
                if c == 1.0 {
                    self.flatten_into(k, true, &mut again);
                } else if c != 0.0 {
                    let cid = self.num(c);
                    again.push(self.mul_raw_coefficient(cid, k));
                }
            }
            if constant != 0.0 {
                again.push(self.num(constant));
            }
            return self.add(&again);
        }
        let mut out = Vec::with_capacity(keys.len() + 1);
        if constant != 0.0 {
            out.push(self.num(constant));
        }
        for (k, c) in keys {
            if c == 0.0 {
                continue;
            }
            if c == 1.0 {
                out.push(k);
            } else {
                let cid = self.num(c);
                out.push(self.mul_raw_coefficient(cid, k));
            }
        }
        self.intern(Node::Sum(out.into()))
    }

    /// `coef * key` where `key` is already a canonical coefficient-free term.
    fn mul_raw_coefficient(&mut self, coef: ExprId, key: ExprId) -> ExprId {
        let mut factors = vec![coef];
        match self.node(key) {
            Node::Product(c) => factors.extend(c.iter().copied()),
            _ => factors.push(key),
        }
        self.intern(Node::Product(factors.into()))
    }

    pub fn add2(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.add(&[a, b])
    }

    pub fn neg(&mut self, a: ExprId) -> ExprId {
        let m = self.num(-1.0);
        self.mul(&[m, a])
    }

    pub fn sub(&mut self, a: ExprId, b: ExprId) -> ExprId {
        let nb = self.neg(b);
        self.add(&[a, nb])
    }

    pub fn mul(&mut self, factors: &[ExprId]) -> ExprId {
        let mut flat = Vec::with_capacity(factors.len());
        for &f in factors {
            self.flatten_into(f, false, &mut flat);
        }
        let mut coef = 1.0;
        let mut bases: Vec<(ExprId, Exponent)> = Vec::new();
        let mut index: HashMap<ExprId, usize> = HashMap::new();
        for f in flat {
            if let Some(c) = self.const_value(f) {
                coef *= c;
                continue;
            }
            let (b, e) = match self.node(f) {
                Node::Pow(b, e) => (*b, *e),
                _ => (f, Exponent::from_integer(1)),
            };
            match index.get(&b) {
                Some(&i) => bases[i].1 += e,
                None => {
                    index.insert(b, bases.len());
                    bases.push((b, e));
                }
            }
        }
        if coef == 0.0 {
            return self.num(0.0);
        }
        let mut out = Vec::with_capacity(bases.len() + 1);
        let mut needs_flatten = false;
        for (b, mut e) in bases {
            if e == Exponent::from_integer(0) {
                continue;
            }
            if self.is_boolean(b) && e > Exponent::from_integer(0) {
                e = Exponent::from_integer(1);
            }
            if e == Exponent::from_integer(1) {
                needs_flatten |= matches!(self.node(b), Node::Product(_));
                out.push(b);
            } else if integer(e).is_some() && matches!(self.node(b), Node::Product(_) | Node::Pow(..)) {
                let p = self.pow(b, e);
                needs_flatten |= !matches!(self.node(p), Node::Pow(pb, _) if *pb == b);
                out.push(p);
            } else {
                out.push(self.intern(Node::Pow(b, e)));
            }
        }
        if needs_flatten {
            let c = self.num(coef);
            out.push(c);
            return self.mul(&out);
        }
        if coef != 1.0 || out.is_empty() {
            out.push(self.num(coef));
        }
        self.intern(Node::Product(out.into()))
    }

    pub fn mul2(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.mul(&[a, b])
    }

    pub fn div(&mut self, a: ExprId, b: ExprId) -> ExprId {
        let inv = self.pow(b, Exponent::from_integer(-1));
        self.mul(&[a, inv])
    }

    pub fn powi(&mut self, base: ExprId, n: i64) -> ExprId {
        self.pow(base, Exponent::from_integer(n))
    }

    pub fn pow(&mut self, base: ExprId, e: Exponent) -> ExprId {
        if e == Exponent::from_integer(0) {
            return self.num(1.0);
        }
        if e == Exponent::from_integer(1) {
            return base;
        }
        if self.const_value(base).is_some() {
            return self.intern(Node::Pow(base, e));
        }
        if self.is_boolean(base) && e > Exponent::from_integer(0) {
            return base;
        }
        if integer(e).is_some() {
            match self.node(base).clone() {
                Node::Pow(b, inner) => return self.pow(b, inner * e),
                // Negative powers of a gated product keep the gate outside.
                Node::Product(children) if e > Exponent::from_integer(0) || !children.iter().any(|&c| self.is_boolean(c)) => {
                    let parts: Vec<ExprId> = children.iter().map(|&c| self.pow(c, e)).collect();
                    return self.mul(&parts);
                }
                _ => {}
            }
        }
        self.intern(Node::Pow(base, e))
    }

    pub fn sqrt(&mut self, a: ExprId) -> ExprId {
        self.pow(a, Exponent::new(1, 2))
    }

    pub fn unary(&mut self, f: UnaryFn, a: ExprId) -> ExprId {
        match f {
            UnaryFn::Sqrt => self.sqrt(a),
            UnaryFn::Abs if self.is_boolean(a) => a,
            UnaryFn::Abs if matches!(self.node(a), Node::Unary(UnaryFn::Abs, _)) => a,
            _ => self.intern(Node::Unary(f, a)),
        }
    }

    pub fn compare(&mut self, op: CmpOp, a: ExprId, b: ExprId) -> ExprId {
        self.intern(Node::Compare(op, a, b))
    }

    /// Coerces a numeric value to a boolean (`v != 0`).
    pub fn truthy(&mut self, a: ExprId) -> ExprId {
        if self.is_boolean(a) {
            a
        } else {
            let z = self.num(0.0);
            self.compare(CmpOp::Neq, a, z)
        }
    }

    pub fn not(&mut self, a: ExprId) -> ExprId {
        let a = self.truthy(a);
        if let Node::Bool(BoolOp::Not, inner) = self.node(a) {
            return inner[0];
        }
        self.intern(Node::Bool(BoolOp::Not, vec![a].into()))
    }

    /// Conjunction, represented as a product of booleans.
    pub fn and(&mut self, args: &[ExprId]) -> ExprId {
        let args: Vec<ExprId> = args.iter().map(|&a| self.truthy(a)).collect();
        self.mul(&args)
    }

    pub fn or(&mut self, args: &[ExprId]) -> ExprId {
        let mut kept: Vec<ExprId> = Vec::new();
        for &a in args {
            let a = self.truthy(a);
            let mut parts = Vec::new();
            match self.node(a) {
                Node::Bool(BoolOp::Or, c) => parts.extend(c.iter().copied()),
                _ => parts.push(a),
            }
            for p in parts {
                match self.const_value(p) {
                    Some(v) if v != 0.0 => return self.num(1.0),
                    Some(_) => {}
                    None if !kept.contains(&p) => kept.push(p),
                    None => {}
                }
            }
        }
        match kept.len() {
            0 => self.num(0.0),
            1 => kept[0],
            _ => self.intern(Node::Bool(BoolOp::Or, kept.into())),
        }
    }

    pub fn select(&mut self, c: ExprId, a: ExprId, b: ExprId) -> ExprId {
        if a == b {
            return a;
        }
        let c = self.truthy(c);
        self.intern(Node::Select(c, a, b))
    }
}

/// Interns `node` (whose children are already canonical) through its canonical constructor.
pub fn construct(arena: &mut ExprArena, node: &Node) -> ExprId {
    match node {
        Node::Sum(c) => arena.add(c),
        Node::Product(c) => arena.mul(c),
        Node::Pow(b, e) => arena.pow(*b, *e),
        Node::Unary(f, a) => arena.unary(*f, *a),
        Node::Compare(op, a, b) => arena.compare(*op, *a, *b),
        Node::Bool(BoolOp::Not, a) => arena.not(a[0]),
        Node::Bool(BoolOp::And, c) => arena.and(c),
        Node::Bool(BoolOp::Or, c) => arena.or(c),
        Node::Select(c, a, b) => arena.select(*c, *a, *b),
        leaf => arena.intern(leaf.clone()),
    }
}

/// Rebuilds `id` bottom-up through the canonical constructors.
pub fn canonicalize(arena: &mut ExprArena, id: ExprId) -> ExprId {
    let mut memo = HashMap::new();
    canonicalize_memo(arena, id, &mut memo)
}

pub fn canonicalize_memo(arena: &mut ExprArena, id: ExprId, memo: &mut HashMap<ExprId, ExprId>) -> ExprId {
    rebuild(arena, id, memo, &mut |_, _| None)
}

/// Canonical bottom-up rebuild of `id`, replacing each leaf for which `leaf` returns `Some`.
pub fn rebuild(
    arena: &mut ExprArena,
    id: ExprId,
    memo: &mut HashMap<ExprId, ExprId>,
    leaf: &mut dyn FnMut(&mut ExprArena, &Node) -> Option<ExprId>,
) -> ExprId {
    for n in arena.reachable(&[id]) {
        if memo.contains_key(&n) {
            continue;
        }
        let node = arena.node(n).clone();
        let new = match &node {
            Node::Const(_) | Node::Param(_) | Node::Access(_) | Node::IndexCoord(_) | Node::InBounds(_) => {
                match leaf(arena, &node) {
                    Some(r) => r,
                    None => arena.intern(node.clone()),
                }
            }
            _ => {
                let mapped = crate::ir::remap_children(&node, &|c| memo[&c]);
                construct(arena, &mapped)
            }
        };
        memo.insert(n, new);
    }
    memo[&id]
}
