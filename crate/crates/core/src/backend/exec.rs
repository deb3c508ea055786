//! Register-program interpreter over grid elements and hyperedges.

use std::marker::PhantomData;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::OnceLock;

use rayon::prelude::*;

use super::program::{KernelProgram, Op};
use super::state::{flatten, neighbor, unflatten, GraphData, Inputs};
use crate::error::{Error, Result};
use crate::ir::eval::{apply_unary, compare, from_bool, pow, truth};
use crate::ir::{Loc, Offset, MAX_RANK};
use crate::real::Real;

/// Elements per accumulation chunk. Fixed so that reductions do not depend on
/// the thread count.
pub const CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecMode {
    #[default]
    Sequential,
    Parallel,
}

/// Worker pool shared by every parallel pass; `MINOPT_THREADS` sets its size.
pub fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let n = std::env::var("MINOPT_THREADS").ok().and_then(|s| s.parse::<usize>().ok()).unwrap_or(0);
        rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool")
    })
}

/// Per-output totals over the whole domain, plus the non-finite flag.
#[derive(Clone, Debug, PartialEq)]
pub struct ExecReport<T> {
    pub sums: Vec<T>,
    pub sum_squares: Vec<T>,
    pub non_finite: bool,
}

/// Raw view of a mutable buffer for passes whose writes are disjoint by construction.
pub struct SharedMut<'a, T> {
    ptr: *mut T,
    len: usize,
    _borrow: PhantomData<&'a mut [T]>,
}

// SAFETY: callers only write through `SharedMut` at indices owned by one element.
unsafe impl<T: Send> Send for SharedMut<'_, T> {}
unsafe impl<T: Send> Sync for SharedMut<'_, T> {}

impl<'a, T: Copy> SharedMut<'a, T> {
    pub fn new(v: &'a mut [T]) -> Self {
        SharedMut { ptr: v.as_mut_ptr(), len: v.len(), _borrow: PhantomData }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// # Safety
    /// No other thread may access index `i` during this pass.
    #[inline]
    pub unsafe fn write(&self, i: usize, v: T) {
        assert!(i < self.len);
        self.ptr.add(i).write(v);
    }

    /// # Safety
    /// As [`SharedMut::write`].
    #[inline]
    pub unsafe fn get(&self, i: usize) -> T {
        assert!(i < self.len);
        self.ptr.add(i).read()
    }
}

/// Loads resolved against bound buffers.
struct BoundLoad<'a, T> {
    data: &'a [T],
    base: usize,
    channels: usize,
    channel: usize,
    shape: [usize; MAX_RANK],
    loc: Loc,
}

fn bind_loads<'a, T: Real>(prog: &KernelProgram, inputs: &Inputs<'a, T>) -> Result<Vec<BoundLoad<'a, T>>> {
    prog.loads
        .iter()
        .map(|a| {
            let f = inputs.layout.field(a.source);
            let data = inputs.buffer(a.source);
            if data.len() < f.base + f.size() {
                return Err(Error::ShapeMismatch(format!(
                    "{:?} buffer has {} values, kernel needs {}",
                    a.source,
                    data.len(),
                    f.base + f.size()
                )));
            }
            Ok(BoundLoad { data, base: f.base, channels: f.channels, channel: a.channel as usize, shape: f.shape, loc: a.loc })
        })
        .collect()
}

enum At<'e> {
    Grid { shape: [usize; MAX_RANK], coords: [usize; MAX_RANK] },
    Edge(&'e [u64]),
}

struct Machine<'p, 'a, T> {
    prog: &'p KernelProgram,
    loads: &'p [BoundLoad<'a, T>],
    consts: &'p [T],
    params: &'a [T],
    /// Set when an out-of-bounds load executes (strict runs only).
    trap: Option<&'p AtomicBool>,
}

impl<T: Real> Machine<'_, '_, T> {
    #[inline]
    fn guard(&self, regs: &[T], g: u32) -> bool {
        self.prog.guards[g as usize].iter().all(|&r| truth(regs[r as usize]))
    }

    #[inline]
    fn load(&self, k: u32, at: &At<'_>) -> T {
        let l = &self.loads[k as usize];
        let elem = match (&l.loc, at) {
            (Loc::Offset(o), At::Grid { coords, .. }) => match neighbor(&l.shape, coords, *o) {
                Some(c) => flatten(&l.shape, &c),
                None => {
                    if let Some(t) = self.trap {
                        t.store(true, Ordering::Relaxed);
                    }
                    return T::zero();
                }
            },
            (Loc::Slot { slot, .. }, At::Edge(v)) => v[*slot as usize] as usize,
            _ => return T::zero(),
        };
        l.data[l.base + elem * l.channels + l.channel]
    }

    fn in_bounds(o: Offset, at: &At<'_>) -> bool {
        match at {
            At::Grid { shape, coords } => neighbor(shape, coords, o).is_some(),
            At::Edge(_) => true,
        }
    }

    /// Runs the program once; returns whether every output is finite.
    fn run(&self, regs: &mut [T], outs: &mut [T], at: &At<'_>) -> bool {
        let instrs = &self.prog.instrs;
        for b in &self.prog.blocks {
            if b.guard != 0 && !self.guard(regs, b.guard) {
                continue;
            }
            for ins in &instrs[b.start as usize..b.end as usize] {
                let r = |i: u32| regs[i as usize];
                let v = match ins.op {
                    Op::Const(k) => self.consts[k as usize],
                    Op::Param(p) => self.params[p as usize],
                    Op::Load(k) => self.load(k, at),
                    Op::Coord(a) => match at {
                        At::Grid { coords, .. } => T::from_f64(coords[a as usize] as f64),
                        At::Edge(_) => T::zero(),
                    },
                    Op::InBounds(o) => from_bool(Self::in_bounds(o, at)),
                    Op::Add(a, c) => r(a) + r(c),
                    Op::Mul(a, c) => r(a) * r(c),
                    Op::Pow(a, k) => pow(r(a), self.prog.exponents[k as usize]),
                    Op::Unary(f, a) => apply_unary(f, r(a)),
                    Op::Cmp(op, a, c) => from_bool(compare(op, r(a), r(c))),
                    Op::Not(a) => from_bool(!truth(r(a))),
                    Op::And(a, c) => from_bool(truth(r(a)) && truth(r(c))),
                    Op::Or(a, c) => from_bool(truth(r(a)) || truth(r(c))),
                    Op::Select(s, a, c) => {
                        if truth(r(s)) {
                            r(a)
                        } else {
                            r(c)
                        }
                    }
                    Op::Gate(g, a) => {
                        if self.guard(regs, g) {
                            r(a)
                        } else {
                            T::zero()
                        }
                    }
                    Op::Truth(g) => from_bool(self.guard(regs, g)),
                    Op::Emit(k, a) => {
                        outs[k as usize] = r(a);
                        continue;
                    }
                };
                regs[ins.dst as usize] = v;
            }
        }
        outs.iter().all(|v| v.is_finite())
    }
}

/// Runs every item in fixed chunks; per-chunk partial sums are added into the
/// totals in chunk order, so the totals do not depend on the mode or thread count.
/// Sequential runs allocate nothing proportional to `n_items`.
fn run_chunks<T: Real>(
    n_items: usize,
    n_outputs: usize,
    mode: ExecMode,
    n_regs: usize,
    body: &(dyn Fn(usize, &mut [T], &mut [T]) -> bool + Sync),
) -> ExecReport<T> {
    let n_chunks = n_items.div_ceil(CHUNK);
    let width = 2 * n_outputs;
    // Partial sums of chunk `c` into `slot` (sums, then sums of squares).
    let chunk = |c: usize, regs: &mut [T], outs: &mut [T], slot: &mut [T]| -> bool {
        slot.fill(T::zero());
        let (s, q) = slot.split_at_mut(n_outputs);
        let mut finite = true;
        for item in c * CHUNK..((c + 1) * CHUNK).min(n_items) {
            finite &= body(item, regs, outs);
            for k in 0..n_outputs {
                s[k] = s[k] + outs[k];
                q[k] = q[k] + outs[k] * outs[k];
            }
        }
        finite
    };
    let mut report = ExecReport { sums: vec![T::zero(); n_outputs], sum_squares: vec![T::zero(); n_outputs], non_finite: false };
    let mut add = |slot: &[T]| {
        for k in 0..n_outputs {
            report.sums[k] = report.sums[k] + slot[k];
            report.sum_squares[k] = report.sum_squares[k] + slot[n_outputs + k];
        }
    };
    let mut finite = true;
    match mode {
        ExecMode::Sequential => {
            let mut regs = vec![T::zero(); n_regs];
            let mut outs = vec![T::zero(); n_outputs];
            let mut slot = vec![T::zero(); width];
            for c in 0..n_chunks {
                finite &= chunk(c, &mut regs, &mut outs, &mut slot);
                add(&slot);
            }
        }
        ExecMode::Parallel if n_chunks > 0 => {
            let per = n_chunks.div_ceil(pool().current_num_threads().max(1));
            let groups: Vec<(bool, Vec<T>)> = pool().install(|| {
                (0..n_chunks.div_ceil(per))
                    .into_par_iter()
                    .map(|g| {
                        let (c0, c1) = (g * per, ((g + 1) * per).min(n_chunks));
                        let mut regs = vec![T::zero(); n_regs];
                        let mut outs = vec![T::zero(); n_outputs];
                        let mut part = vec![T::zero(); (c1 - c0) * width];
                        let mut ok = true;
                        for c in c0..c1 {
                            let i = (c - c0) * width;
                            ok &= chunk(c, &mut regs, &mut outs, &mut part[i..i + width]);
                        }
                        (ok, part)
                    })
                    .collect()
            });
            for (ok, part) in &groups {
                finite &= ok;
                for c in 0..part.len() / width.max(1) {
                    add(&part[c * width..(c + 1) * width]);
                }
            }
        }
        ExecMode::Parallel => {}
    }
    report.non_finite = !finite;
    report
}

/// Runs `prog` once per element of a grid of `shape`. `sink(elem, outs)` receives
/// the outputs of each element; it must only write locations owned by `elem`.
pub fn exec_grid<T: Real>(
    prog: &KernelProgram,
    inputs: &Inputs<'_, T>,
    shape: [usize; MAX_RANK],
    mode: ExecMode,
    sink: &(dyn Fn(usize, &[T]) + Sync),
) -> Result<ExecReport<T>> {
    grid_impl(prog, inputs, shape, mode, sink, None)
}

/// As [`exec_grid`], but fails with `DomainFault` if any out-of-bounds load executes.
pub fn exec_grid_strict<T: Real>(
    prog: &KernelProgram,
    inputs: &Inputs<'_, T>,
    shape: [usize; MAX_RANK],
    sink: &(dyn Fn(usize, &[T]) + Sync),
) -> Result<ExecReport<T>> {
    let trap = AtomicBool::new(false);
    let r = grid_impl(prog, inputs, shape, ExecMode::Sequential, sink, Some(&trap))?;
    if trap.load(Ordering::Relaxed) {
        return Err(Error::DomainFault("out-of-bounds load executed".into()));
    }
    Ok(r)
}

fn grid_impl<T: Real>(
    prog: &KernelProgram,
    inputs: &Inputs<'_, T>,
    shape: [usize; MAX_RANK],
    mode: ExecMode,
    sink: &(dyn Fn(usize, &[T]) + Sync),
    trap: Option<&AtomicBool>,
) -> Result<ExecReport<T>> {
    if inputs.params.len() < prog_params(prog) {
        return Err(Error::ShapeMismatch(format!("{} parameters bound", inputs.params.len())));
    }
    let loads = bind_loads(prog, inputs)?;
    for l in &loads {
        if matches!(l.loc, Loc::Offset(_)) && l.shape != shape {
            return Err(Error::ShapeMismatch(format!("field of shape {:?} read over grid {:?}", l.shape, shape)));
        }
    }
    let consts: Vec<T> = prog.consts.iter().map(|&c| T::from_f64(c)).collect();
    let m = Machine { prog, loads: &loads, consts: &consts, params: inputs.params, trap };
    let n: usize = shape.iter().product();
    Ok(run_chunks(n, prog.n_outputs, mode, prog.n_regs, &|e, regs, outs| {
        let at = At::Grid { shape, coords: unflatten(&shape, e) };
        let ok = m.run(regs, outs, &at);
        sink(e, outs);
        ok
    }))
}

/// Runs `prog` once per hyperedge. `sink(edge, vertices, outs)` scatters the
/// outputs; in parallel mode it must accumulate atomically.
pub fn exec_graph<T: Real>(
    prog: &KernelProgram,
    inputs: &Inputs<'_, T>,
    graph: &GraphData,
    mode: ExecMode,
    sink: &(dyn Fn(usize, &[u64], &[T]) + Sync),
) -> Result<ExecReport<T>> {
    if inputs.params.len() < prog_params(prog) {
        return Err(Error::ShapeMismatch(format!("{} parameters bound", inputs.params.len())));
    }
    let loads = bind_loads(prog, inputs)?;
    let mut limits: Vec<Option<usize>> = vec![None; graph.arity];
    for l in &loads {
        match l.loc {
            Loc::Slot { slot, .. } => {
                let s = slot as usize;
                if s >= graph.arity {
                    return Err(Error::ShapeMismatch(format!("slot {s} of a graph with arity {}", graph.arity)));
                }
                let len = l.shape.iter().product::<usize>();
                limits[s] = Some(limits[s].map_or(len, |x: usize| x.min(len)));
            }
            Loc::Offset(_) => return Err(Error::ShapeMismatch("stencil read in a graph kernel".into())),
        }
    }
    graph.check_indices(&limits)?;
    let consts: Vec<T> = prog.consts.iter().map(|&c| T::from_f64(c)).collect();
    let m = Machine { prog, loads: &loads, consts: &consts, params: inputs.params, trap: None };
    Ok(run_chunks(graph.edge_count(), prog.n_outputs, mode, prog.n_regs, &|e, regs, outs| {
        let v = graph.edge(e);
        let ok = m.run(regs, outs, &At::Edge(v));
        sink(e, v, outs);
        ok
    }))
}

fn prog_params(prog: &KernelProgram) -> usize {
    prog.instrs
        .iter()
        .filter_map(|i| match i.op {
            Op::Param(p) => Some(p as usize + 1),
            _ => None,
        })
        .max()
        .unwrap_or(0)
}
