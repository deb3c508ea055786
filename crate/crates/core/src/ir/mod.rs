//! Hash-consed scalar expression DAG.
//!
//! Nodes live in an append-only [`ExprArena`]. Interning the same structure twice
//! yields the same [`ExprId`], so common subexpressions are shared by construction.
//! The raw [`ExprArena::intern`] only sorts n-ary children and folds trivially
//! constant cases; the algebraic smart constructors live in `simplify::canon`.

mod dump;
pub(crate) mod eval;

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};

pub use dump::dump;
pub use eval::{eval_expr, eval_expr_memo, fold_compare, fold_unary, Environment};

use num_rational::Ratio;

/// Maximum grid rank supported by stencil offsets.
pub const MAX_RANK: usize = 3;

pub type Exponent = Ratio<i64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExprId(u32);

impl ExprId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(i: usize) -> Self {
        ExprId(i as u32)
    }
}

impl std::fmt::Display for ExprId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "%{}", self.0)
    }
}

/// Constant integer displacement from the local origin of a stencil.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Offset(pub [i32; MAX_RANK]);

impl Offset {
    pub const ZERO: Offset = Offset([0; MAX_RANK]);

    pub fn new(components: &[i32]) -> Self {
        let mut o = [0; MAX_RANK];
        o[..components.len()].copy_from_slice(components);
        Offset(o)
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; MAX_RANK]
    }
}

impl std::ops::Add for Offset {
    type Output = Offset;

    fn add(self, other: Offset) -> Offset {
        let mut o = self.0;
        for (a, b) in o.iter_mut().zip(other.0) {
            *a += b;
        }
        Offset(o)
    }
}

impl std::ops::Neg for Offset {
    type Output = Offset;

    fn neg(self) -> Offset {
        Offset(self.0.map(|v| -v))
    }
}

impl std::fmt::Display for Offset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

/// Where an access reads: a stencil offset or a hyperedge slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Loc {
    Offset(Offset),
    Slot { graph: u16, slot: u16 },
}

impl Loc {
    pub fn offset(&self) -> Option<Offset> {
        match self {
            Loc::Offset(o) => Some(*o),
            Loc::Slot { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Unknown(u16),
    Array(u16),
    Computed(u16),
    /// Symbolic search direction `P`, shaped like the unknown with this index.
    Direction(u16),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Access {
    pub source: Source,
    pub channel: u16,
    pub loc: Loc,
}

impl Access {
    pub fn with_loc(self, loc: Loc) -> Self {
        Access { loc, ..self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryFn {
    Sqrt,
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Atan,
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Exp => "exp",
            UnaryFn::Log => "log",
            UnaryFn::Abs => "abs",
            UnaryFn::Atan => "atan",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Neq,
    Less,
    Leq,
    Greater,
    Geq,
}

impl CmpOp {
    pub fn name(self) -> &'static str {
        match self {
            CmpOp::Eq => "eq",
            CmpOp::Neq => "neq",
            CmpOp::Less => "less",
            CmpOp::Leq => "leq",
            CmpOp::Greater => "greater",
            CmpOp::Geq => "geq",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoolOp {
    And,
    Or,
    Not,
}

impl BoolOp {
    pub fn name(self) -> &'static str {
        match self {
            BoolOp::And => "and",
            BoolOp::Or => "or",
            BoolOp::Not => "not",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    /// Bit pattern of an `f64`; `-0.0` and NaN payloads are normalized.
    Const(u64),
    Param(u16),
    Access(Access),
    IndexCoord(u8),
    Sum(Box<[ExprId]>),
    Product(Box<[ExprId]>),
    Pow(ExprId, Exponent),
    Unary(UnaryFn, ExprId),
    Compare(CmpOp, ExprId, ExprId),
    Bool(BoolOp, Box<[ExprId]>),
    InBounds(Offset),
    Select(ExprId, ExprId, ExprId),
}

impl Node {
    pub fn constant(v: f64) -> Node {
        let v = if v == 0.0 { 0.0 } else if v.is_nan() { f64::NAN } else { v };
        Node::Const(v.to_bits())
    }

    fn rank(&self) -> u8 {
        match self {
            Node::Const(_) => 0,
            Node::Param(_) => 1,
            Node::IndexCoord(_) => 2,
            Node::InBounds(_) => 3,
            Node::Compare(..) => 4,
            Node::Bool(..) => 5,
            Node::Access(_) => 6,
            Node::Unary(..) => 7,
            Node::Pow(..) => 8,
            Node::Product(_) => 9,
            Node::Sum(_) => 10,
            Node::Select(..) => 11,
        }
    }

    pub fn children(&self) -> Vec<ExprId> {
        match self {
            Node::Const(_) | Node::Param(_) | Node::Access(_) | Node::IndexCoord(_) | Node::InBounds(_) => {
                Vec::new()
            }
            Node::Sum(c) | Node::Product(c) | Node::Bool(_, c) => c.to_vec(),
            Node::Pow(b, _) => vec![*b],
            Node::Unary(_, a) => vec![*a],
            Node::Compare(_, a, b) => vec![*a, *b],
            Node::Select(c, a, b) => vec![*c, *a, *b],
        }
    }
}

const BOOLEAN: u8 = 1;
const HAS_UNKNOWN: u8 = 2;
const HAS_DIRECTION: u8 = 4;
const HAS_COMPUTED: u8 = 8;
const HAS_SLOT: u8 = 16;
const HAS_OFFSET: u8 = 32;

#[derive(Clone, Copy, Debug)]
struct Info {
    hash: u64,
    flags: u8,
}

/// Append-only node table with structural deduplication.
#[derive(Clone, Debug, Default)]
pub struct ExprArena {
    nodes: Vec<Node>,
    info: Vec<Info>,
    lookup: HashMap<Node, ExprId>,
}

impl ExprArena {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: ExprId) -> &Node {
        &self.nodes[id.index()]
    }

    /// Structural hash, independent of the order in which the arena was built.
    pub fn structural_hash(&self, id: ExprId) -> u64 {
        self.info[id.index()].hash
    }

    /// Evaluates to exactly 0 or 1 for every input.
    pub fn is_boolean(&self, id: ExprId) -> bool {
        self.info[id.index()].flags & BOOLEAN != 0
    }

    pub fn has_unknown(&self, id: ExprId) -> bool {
        self.info[id.index()].flags & HAS_UNKNOWN != 0
    }

    pub fn has_direction(&self, id: ExprId) -> bool {
        self.info[id.index()].flags & HAS_DIRECTION != 0
    }

    pub fn has_computed(&self, id: ExprId) -> bool {
        self.info[id.index()].flags & HAS_COMPUTED != 0
    }

    pub fn has_slot(&self, id: ExprId) -> bool {
        self.info[id.index()].flags & HAS_SLOT != 0
    }

    /// True if any access or `InBounds` uses a stencil offset.
    pub fn has_offset(&self, id: ExprId) -> bool {
        self.info[id.index()].flags & HAS_OFFSET != 0
    }

    pub fn const_value(&self, id: ExprId) -> Option<f64> {
        match self.node(id) {
            Node::Const(bits) => Some(f64::from_bits(*bits)),
            _ => None,
        }
    }

    pub fn is_const(&self, id: ExprId, v: f64) -> bool {
        self.const_value(id) == Some(v)
    }

    /// Canonical total order on nodes: kind rank, then structural hash, then id.
    pub fn order_key(&self, id: ExprId) -> (u8, u64, ExprId) {
        (self.node(id).rank(), self.structural_hash(id), id)
    }

    pub fn num(&mut self, v: f64) -> ExprId {
        self.intern(Node::constant(v))
    }

    pub fn zero(&mut self) -> ExprId {
        self.num(0.0)
    }

    pub fn one(&mut self) -> ExprId {
        self.num(1.0)
    }

    /// Interns `node`, folding the trivially constant cases and sorting n-ary children.
    pub fn intern(&mut self, node: Node) -> ExprId {
        let node = match self.fold(node) {
            Ok(id) => return id,
            Err(node) => node,
        };
        if let Some(&id) = self.lookup.get(&node) {
            return id;
        }
        let info = self.compute_info(&node);
        let id = ExprId(u32::try_from(self.nodes.len()).expect("expression arena overflow"));
        self.nodes.push(node.clone());
        self.info.push(info);
        self.lookup.insert(node, id);
        id
    }

    fn sort_children(&self, children: &mut [ExprId]) {
        children.sort_by_key(|&c| self.order_key(c));
    }

    /// Returns `Ok(id)` when the node folds to an existing expression.
    fn fold(&mut self, node: Node) -> Result<ExprId, Node> {
        match node {
            Node::Const(bits) => Err(Node::constant(f64::from_bits(bits))),
            Node::Sum(children) => {
                let mut children = children.into_vec();
                if children.is_empty() {
                    return Ok(self.num(0.0));
                }
                if children.len() == 1 {
                    return Ok(children[0]);
                }
                if let Some(vals) = self.all_consts(&children) {
                    let mut acc = 0.0;
                    for v in vals {
                        acc += v;
                    }
                    return Ok(self.num(acc));
                }
                self.sort_children(&mut children);
                Err(Node::Sum(children.into()))
            }
            Node::Product(children) => {
                let mut children = children.into_vec();
                if children.is_empty() {
                    return Ok(self.num(1.0));
                }
                if children.len() == 1 {
                    return Ok(children[0]);
                }
                if children.iter().any(|&c| self.is_const(c, 0.0)) {
                    return Ok(self.num(0.0));
                }
                if let Some(vals) = self.all_consts(&children) {
                    let mut acc = 1.0;
                    for v in vals {
                        acc *= v;
                    }
                    return Ok(self.num(acc));
                }
                self.sort_children(&mut children);
                Err(Node::Product(children.into()))
            }
            Node::Pow(base, e) => match self.const_value(base) {
                Some(b) => Ok(self.num(eval::pow_f64(b, e))),
                None if e == Exponent::from_integer(1) => Ok(base),
                None => Err(Node::Pow(base, e)),
            },
            Node::Unary(f, a) => match self.const_value(a) {
                Some(v) => Ok(self.num(fold_unary(f, v))),
                None => Err(Node::Unary(f, a)),
            },
            Node::Compare(op, a, b) => match (self.const_value(a), self.const_value(b)) {
                (Some(x), Some(y)) => Ok(self.num(if fold_compare(op, x, y) { 1.0 } else { 0.0 })),
                _ => Err(Node::Compare(op, a, b)),
            },
            Node::Bool(op, args) => {
                let mut args = args.into_vec();
                if let Some(vals) = self.all_consts(&args) {
                    let truth = |v: f64| v != 0.0;
                    let r = match op {
                        BoolOp::And => vals.iter().all(|&v| truth(v)),
                        BoolOp::Or => vals.iter().any(|&v| truth(v)),
                        BoolOp::Not => !truth(vals[0]),
                    };
                    return Ok(self.num(if r { 1.0 } else { 0.0 }));
                }
                if op != BoolOp::Not {
                    self.sort_children(&mut args);
                }
                Err(Node::Bool(op, args.into()))
            }
            Node::InBounds(o) if o.is_zero() => Ok(self.num(1.0)),
            Node::Select(c, a, b) => match self.const_value(c) {
                Some(v) if v != 0.0 => Ok(a),
                Some(_) => Ok(b),
                None => Err(Node::Select(c, a, b)),
            },
            other => Err(other),
        }
    }

    fn all_consts(&self, ids: &[ExprId]) -> Option<Vec<f64>> {
        ids.iter().map(|&c| self.const_value(c)).collect()
    }

    fn compute_info(&self, node: &Node) -> Info {
        let mut h = DefaultHasher::new();
        node.rank().hash(&mut h);
        let children = node.children();
        let mut flags = 0u8;
        for c in &children {
            let ci = self.info[c.index()];
            ci.hash.hash(&mut h);
            flags |= ci.flags & !BOOLEAN;
        }
        match node {
            Node::Const(bits) => bits.hash(&mut h),
            Node::Param(p) => p.hash(&mut h),
            Node::Access(a) => {
                a.hash(&mut h);
                flags |= match a.source {
                    Source::Unknown(_) => HAS_UNKNOWN,
                    Source::Direction(_) => HAS_DIRECTION,
                    Source::Computed(_) => HAS_COMPUTED,
                    Source::Array(_) => 0,
                };
                flags |= match a.loc {
                    Loc::Offset(_) => HAS_OFFSET,
                    Loc::Slot { .. } => HAS_SLOT,
                };
            }
            Node::IndexCoord(axis) => {
                axis.hash(&mut h);
                flags |= HAS_OFFSET;
            }
            Node::Pow(_, e) => e.hash(&mut h),
            Node::Unary(f, _) => f.hash(&mut h),
            Node::Compare(op, ..) => op.hash(&mut h),
            Node::Bool(op, _) => op.hash(&mut h),
            Node::InBounds(o) => {
                o.hash(&mut h);
                flags |= HAS_OFFSET;
            }
            Node::Sum(_) | Node::Product(_) | Node::Select(..) => {}
        }
        let boolean = match node {
            Node::Compare(..) | Node::Bool(..) | Node::InBounds(_) => true,
            Node::Product(c) => c.iter().all(|&c| self.is_boolean(c)),
            Node::Select(_, a, b) => self.is_boolean(*a) && self.is_boolean(*b),
            Node::Const(bits) => {
                let v = f64::from_bits(*bits);
                v == 0.0 || v == 1.0
            }
            _ => false,
        };
        if boolean {
            flags |= BOOLEAN;
        }
        Info { hash: h.finish(), flags }
    }

    /// Nodes reachable from `roots`, in increasing id order (a topological order).
    pub fn reachable(&self, roots: &[ExprId]) -> Vec<ExprId> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<ExprId> = roots.to_vec();
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id.index()], true) {
                continue;
            }
            stack.extend(self.node(id).children());
        }
        seen.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| ExprId(i as u32)).collect()
    }

    /// Distinct accesses reachable from `root`, sorted.
    pub fn accesses(&self, root: ExprId) -> Vec<Access> {
        let mut out: Vec<Access> = self
            .reachable(&[root])
            .into_iter()
            .filter_map(|id| match self.node(id) {
                Node::Access(a) => Some(*a),
                _ => None,
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Rebuilds `root` bottom-up, replacing each leaf for which `f` returns `Some`.
    /// Interior nodes are re-interned raw, so folding still applies.
    pub fn map_leaves(&mut self, root: ExprId, f: &mut dyn FnMut(&mut ExprArena, &Node) -> Option<ExprId>) -> ExprId {
        let order = self.reachable(&[root]);
        let mut map: HashMap<ExprId, ExprId> = HashMap::with_capacity(order.len());
        for id in order {
            let node = self.node(id).clone();
            let new = match &node {
                Node::Const(_) | Node::Param(_) | Node::Access(_) | Node::IndexCoord(_) | Node::InBounds(_) => {
                    f(self, &node).unwrap_or(id)
                }
                _ => {
                    let rebuilt = remap_children(&node, &|c| map[&c]);
                    if rebuilt == node {
                        id
                    } else {
                        self.intern(rebuilt)
                    }
                }
            };
            map.insert(id, new);
        }
        map[&root]
    }
}

/// Copies `node` with every child id passed through `f`.
pub fn remap_children(node: &Node, f: &dyn Fn(ExprId) -> ExprId) -> Node {
    match node {
        Node::Sum(c) => Node::Sum(c.iter().map(|&c| f(c)).collect()),
        Node::Product(c) => Node::Product(c.iter().map(|&c| f(c)).collect()),
        Node::Bool(op, c) => Node::Bool(*op, c.iter().map(|&c| f(c)).collect()),
        Node::Pow(b, e) => Node::Pow(f(*b), *e),
        Node::Unary(u, a) => Node::Unary(*u, f(*a)),
        Node::Compare(op, a, b) => Node::Compare(*op, f(*a), f(*b)),
        Node::Select(c, a, b) => Node::Select(f(*c), f(*a), f(*b)),
        leaf => leaf.clone(),
    }
}
