//! Random expression trees over a small 2-D problem.

use minopt::backend::{unflatten, ElementEnv, Inputs, Layout, Site, State};
use minopt::frontend::{compile_source, ProblemSpec};
use minopt::ir::{
    Access, BoolOp, CmpOp, Environment, ExprArena, ExprId, Exponent, Loc, Node, Offset, Source, UnaryFn,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DECLS: &str = "
dim W 4
dim H 3
unknown X[W,H]
array A[W,H]
array B[W,H]
array C[W,H]
param s
param t
";

pub fn problem() -> ProblemSpec {
    compile_source(DECLS, &[]).unwrap()
}

#[derive(Clone, Debug)]
pub enum Tree {
    Int(i32),
    Num(f64),
    Param(u16),
    /// Source 0..3 = arrays A, B, C; 3 = unknown X.
    Read(u8, i8, i8),
    InBounds(i8, i8),
    Add(Box<Tree>, Box<Tree>),
    Sub(Box<Tree>, Box<Tree>),
    Mul(Box<Tree>, Box<Tree>),
    Div(Box<Tree>, Box<Tree>),
    PowI(Box<Tree>, i32),
    Unary(UnaryFn, Box<Tree>),
    Cmp(CmpOp, Box<Tree>, Box<Tree>),
    Not(Box<Tree>),
    And(Box<Tree>, Box<Tree>),
    Or(Box<Tree>, Box<Tree>),
    Select(Box<Tree>, Box<Tree>, Box<Tree>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavor {
    /// Integer-valued polynomials with selects: exact in floating point.
    Exact,
    /// Positive inputs, no subtraction: no cancellation, tight relative error.
    Positive,
    /// Everything, including transcendental functions and subtraction.
    General,
}

fn leaf(f: Flavor) -> BoxedStrategy<Tree> {
    let read = (0u8..4, -1i8..=1, -1i8..=1).prop_map(|(s, i, j)| Tree::Read(s, i, j));
    let param = (0u16..2).prop_map(Tree::Param);
    match f {
        Flavor::Exact => prop_oneof![3 => read, 1 => param, 1 => (-3i32..=3).prop_map(Tree::Int)].boxed(),
        Flavor::Positive => prop_oneof![3 => read, 1 => param, 1 => (1i32..=4).prop_map(Tree::Int)].boxed(),
        Flavor::General => prop_oneof![
            3 => read,
            1 => param,
            1 => (-3i32..=3).prop_map(Tree::Int),
            1 => (-2.0f64..2.0).prop_map(Tree::Num)
        ]
        .boxed(),
    }
}

fn boolean(f: Flavor, v: BoxedStrategy<Tree>) -> BoxedStrategy<Tree> {
    let cmp = prop_oneof![
        Just(CmpOp::Eq),
        Just(CmpOp::Neq),
        Just(CmpOp::Less),
        Just(CmpOp::Leq),
        Just(CmpOp::Greater),
        Just(CmpOp::Geq)
    ];
    let inb = (-1i8..=1, -1i8..=1).prop_map(|(i, j)| Tree::InBounds(i, j));
    // Comparison operands stay leaves so that reassociation cannot flip them.
    let operand = if f == Flavor::Exact { v } else { leaf(f) };
    let atom = prop_oneof![
        2 => inb,
        2 => (cmp, operand.clone(), operand).prop_map(|(c, a, b)| Tree::Cmp(c, Box::new(a), Box::new(b)))
    ];
    atom.prop_recursive(2, 6, 2, |b| {
        prop_oneof![
            b.clone().prop_map(|x| Tree::Not(Box::new(x))),
            (b.clone(), b.clone()).prop_map(|(x, y)| Tree::And(Box::new(x), Box::new(y))),
            (b.clone(), b).prop_map(|(x, y)| Tree::Or(Box::new(x), Box::new(y))),
        ]
    })
    .boxed()
}

pub fn tree(f: Flavor) -> BoxedStrategy<Tree> {
    leaf(f)
        .prop_recursive(5, 48, 3, move |inner| {
            let bx = |t: Tree| Box::new(t);
            let cond = boolean(f, inner.clone());
            let mut ops: Vec<(u32, BoxedStrategy<Tree>)> = vec![
                (3, (inner.clone(), inner.clone()).prop_map(move |(a, b)| Tree::Add(bx(a), bx(b))).boxed()),
                (3, (inner.clone(), inner.clone()).prop_map(move |(a, b)| Tree::Mul(bx(a), bx(b))).boxed()),
                (1, (inner.clone(), 2i32..=3).prop_map(move |(a, k)| Tree::PowI(bx(a), k)).boxed()),
                (
                    2,
                    (cond.clone(), inner.clone(), inner.clone())
                        .prop_map(move |(c, a, b)| Tree::Select(bx(c), bx(a), bx(b)))
                        .boxed(),
                ),
                (1, (cond, inner.clone()).prop_map(move |(c, a)| Tree::Mul(bx(c), bx(a))).boxed()),
            ];
            if f != Flavor::Positive {
                ops.push((2, (inner.clone(), inner.clone()).prop_map(move |(a, b)| Tree::Sub(bx(a), bx(b))).boxed()));
            }
            if f != Flavor::Exact {
                ops.push((1, (inner.clone(), inner.clone()).prop_map(move |(a, b)| Tree::Div(bx(a), bx(b))).boxed()));
                let un = if f == Flavor::Positive {
                    prop_oneof![Just(UnaryFn::Sqrt), Just(UnaryFn::Atan), Just(UnaryFn::Log)].boxed()
                } else {
                    prop_oneof![
                        Just(UnaryFn::Sqrt),
                        Just(UnaryFn::Sin),
                        Just(UnaryFn::Cos),
                        Just(UnaryFn::Exp),
                        Just(UnaryFn::Log),
                        Just(UnaryFn::Abs),
                        Just(UnaryFn::Atan)
                    ]
                    .boxed()
                };
                ops.push((1, (un, inner).prop_map(move |(u, a)| Tree::Unary(u, bx(a))).boxed()));
            }
            proptest::strategy::Union::new_weighted(ops)
        })
        .boxed()
}

pub fn access(src: u8, i: i8, j: i8) -> Access {
    let source = if src == 3 { Source::Unknown(0) } else { Source::Array(src as u16) };
    Access { source, channel: 0, loc: Loc::Offset(Offset::new(&[i as i32, j as i32])) }
}

/// Interns the tree without algebraic rewriting (raw nodes only).
pub fn build_raw(ar: &mut ExprArena, t: &Tree) -> ExprId {
    let node = match t {
        Tree::Int(v) => Node::constant(*v as f64),
        Tree::Num(v) => Node::constant(*v),
        Tree::Param(p) => Node::Param(*p),
        Tree::Read(s, i, j) => Node::Access(access(*s, *i, *j)),
        Tree::InBounds(i, j) => Node::InBounds(Offset::new(&[*i as i32, *j as i32])),
        Tree::Add(x, y) => Node::Sum(vec![build_raw(ar, x), build_raw(ar, y)].into()),
        Tree::Sub(x, y) => {
            let (x, y) = (build_raw(ar, x), build_raw(ar, y));
            let m = ar.num(-1.0);
            let ny = ar.intern(Node::Product(vec![m, y].into()));
            Node::Sum(vec![x, ny].into())
        }
        Tree::Mul(x, y) => Node::Product(vec![build_raw(ar, x), build_raw(ar, y)].into()),
        Tree::Div(x, y) => {
            let (x, y) = (build_raw(ar, x), build_raw(ar, y));
            let inv = ar.intern(Node::Pow(y, Exponent::from_integer(-1)));
            Node::Product(vec![x, inv].into())
        }
        Tree::PowI(x, k) => Node::Pow(build_raw(ar, x), Exponent::from_integer(*k as i64)),
        Tree::Unary(UnaryFn::Sqrt, x) => Node::Pow(build_raw(ar, x), Exponent::new(1, 2)),
        Tree::Unary(u, x) => Node::Unary(*u, build_raw(ar, x)),
        Tree::Cmp(op, x, y) => Node::Compare(*op, build_raw(ar, x), build_raw(ar, y)),
        Tree::Not(x) => Node::Bool(BoolOp::Not, vec![build_raw(ar, x)].into()),
        Tree::And(x, y) => Node::Bool(BoolOp::And, vec![build_raw(ar, x), build_raw(ar, y)].into()),
        Tree::Or(x, y) => Node::Bool(BoolOp::Or, vec![build_raw(ar, x), build_raw(ar, y)].into()),
        Tree::Select(c, x, y) => {
            let c = build_raw(ar, c);
            let c = if ar.is_boolean(c) {
                c
            } else {
                let z = ar.zero();
                ar.intern(Node::Compare(CmpOp::Neq, c, z))
            };
            Node::Select(c, build_raw(ar, x), build_raw(ar, y))
        }
    };
    ar.intern(node)
}

/// Offsets read by the tree.
pub fn read_offsets(t: &Tree, out: &mut Vec<Offset>) {
    match t {
        Tree::Read(_, i, j) => out.push(Offset::new(&[*i as i32, *j as i32])),
        Tree::Add(a, b) | Tree::Sub(a, b) | Tree::Mul(a, b) | Tree::Div(a, b) | Tree::Cmp(_, a, b) => {
            read_offsets(a, out);
            read_offsets(b, out);
        }
        Tree::And(a, b) | Tree::Or(a, b) => {
            read_offsets(a, out);
            read_offsets(b, out);
        }
        Tree::PowI(a, _) | Tree::Unary(_, a) | Tree::Not(a) => read_offsets(a, out),
        Tree::Select(c, a, b) => {
            read_offsets(c, out);
            read_offsets(a, out);
            read_offsets(b, out);
        }
        _ => {}
    }
}

/// Wraps every read at a nonzero offset in `select(inbounds(o), read, 0)`.
pub fn protect_locally(t: &Tree) -> Tree {
    let p = |x: &Tree| Box::new(protect_locally(x));
    match t {
        Tree::Read(_, i, j) if (*i, *j) != (0, 0) => {
            Tree::Select(Box::new(Tree::InBounds(*i, *j)), Box::new(t.clone()), Box::new(Tree::Int(0)))
        }
        Tree::Add(a, b) => Tree::Add(p(a), p(b)),
        Tree::Sub(a, b) => Tree::Sub(p(a), p(b)),
        Tree::Mul(a, b) => Tree::Mul(p(a), p(b)),
        Tree::Div(a, b) => Tree::Div(p(a), p(b)),
        Tree::Cmp(o, a, b) => Tree::Cmp(*o, p(a), p(b)),
        Tree::And(a, b) => Tree::And(p(a), p(b)),
        Tree::Or(a, b) => Tree::Or(p(a), p(b)),
        Tree::PowI(a, k) => Tree::PowI(p(a), *k),
        Tree::Unary(u, a) => Tree::Unary(*u, p(a)),
        Tree::Not(a) => Tree::Not(p(a)),
        Tree::Select(c, a, b) => Tree::Select(p(c), p(a), p(b)),
        other => other.clone(),
    }
}

/// Random state for the problem of [`problem`].
pub fn random_state(spec: &ProblemSpec, f: Flavor, seed: u64) -> State<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = State::zeros(spec);
    let draw = |rng: &mut ChaCha8Rng| match f {
        Flavor::Exact => rng.gen_range(-3i32..=3) as f64,
        Flavor::Positive => rng.gen_range(0.5..2.0),
        Flavor::General => rng.gen_range(-2.0..2.0),
    };
    for v in st.x.iter_mut().chain(st.params.iter_mut()) {
        *v = draw(&mut rng);
    }
    for a in st.arrays.iter_mut() {
        for v in a.iter_mut() {
            *v = draw(&mut rng);
        }
    }
    st
}

/// Environment that refuses out-of-bounds reads.
pub struct Trapping<'a>(pub ElementEnv<'a, f64>);

impl Environment<f64> for Trapping<'_> {
    fn param(&self, i: u16) -> Option<f64> {
        self.0.param(i)
    }
    fn access(&self, a: &Access) -> Option<f64> {
        if let (Loc::Offset(o), Site::Grid { shape, coords }) = (a.loc, self.0.site) {
            minopt::backend::neighbor(&shape, &coords, o)?;
        }
        self.0.access(a)
    }
    fn in_bounds(&self, o: Offset) -> bool {
        self.0.in_bounds(o)
    }
    fn coord(&self, axis: u8) -> f64 {
        self.0.coord(axis)
    }
}

/// Every element of the 4×3 grid, as environments.
pub fn sites(spec: &ProblemSpec) -> Vec<Site<'static>> {
    let shape = spec.domain_shape(0);
    (0..spec.domain_len(0)).map(|i| Site::Grid { shape, coords: unflatten(&shape, i) }).collect()
}

pub fn env<'a>(inputs: Inputs<'a, f64>, site: Site<'a>) -> ElementEnv<'a, f64> {
    ElementEnv { inputs, site }
}

pub fn layout(spec: &ProblemSpec) -> Layout {
    Layout::new(spec)
}

/// Equal, or both NaN.
pub fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()) || (a == 0.0 && b == 0.0)
}

/// Expressions that are smooth in the unknown X: conditions read arrays only,
/// and every primitive is composed so that its argument stays in its domain.
pub fn smooth() -> BoxedStrategy<Tree> {
    let x = (-1i8..=1, -1i8..=1).prop_map(|(i, j)| Tree::Read(3, i, j));
    let a = (0u8..3, -1i8..=1, -1i8..=1).prop_map(|(s, i, j)| Tree::Read(s, i, j));
    let leaf = prop_oneof![
        5 => x,
        1 => a.clone(),
        1 => (0u16..2).prop_map(Tree::Param),
        1 => (-2.0f64..2.0).prop_map(Tree::Num)
    ];
    let cond = prop_oneof![
        (-1i8..=1, -1i8..=1).prop_map(|(i, j)| Tree::InBounds(i, j)),
        (a.clone(), a).prop_map(|(p, q)| Tree::Cmp(CmpOp::Less, Box::new(p), Box::new(q))),
    ];
    leaf.prop_recursive(8, 32, 3, move |inner| {
        let bx = |t: Tree| Box::new(t);
        // 1 + t², positive and bounded away from 0.
        let lift = |t: Tree| Tree::Add(Box::new(Tree::Int(1)), Box::new(Tree::PowI(Box::new(t), 2)));
        let un = prop_oneof![Just(UnaryFn::Sin), Just(UnaryFn::Cos), Just(UnaryFn::Atan)];
        prop_oneof![
            3 => (inner.clone(), inner.clone()).prop_map(move |(p, q)| Tree::Add(bx(p), bx(q))),
            2 => (inner.clone(), inner.clone()).prop_map(move |(p, q)| Tree::Sub(bx(p), bx(q))),
            3 => (inner.clone(), inner.clone()).prop_map(move |(p, q)| Tree::Mul(bx(p), bx(q))),
            1 => (inner.clone(), inner.clone()).prop_map(move |(p, q)| Tree::Div(bx(p), bx(lift(q)))),
            1 => (inner.clone(), 2i32..=3).prop_map(move |(p, k)| Tree::PowI(bx(p), k)),
            2 => (un, inner.clone()).prop_map(move |(u, p)| Tree::Unary(u, bx(p))),
            1 => inner.clone().prop_map(move |p| Tree::Unary(UnaryFn::Exp, bx(Tree::Unary(UnaryFn::Atan, bx(p))))),
            1 => inner.clone().prop_map(move |p| Tree::Unary(UnaryFn::Sqrt, bx(lift(p)))),
            1 => inner.clone().prop_map(move |p| Tree::Unary(UnaryFn::Log, bx(lift(p)))),
            1 => inner.clone().prop_map(move |p| Tree::Unary(UnaryFn::Abs, bx(p))),
            1 => (cond.clone(), inner.clone(), inner)
                .prop_map(move |(c, p, q)| Tree::Select(bx(c), bx(p), bx(q))),
        ]
    })
    .boxed()
}
