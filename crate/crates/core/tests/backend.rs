mod common;

use common::gen::*;
use common::*;
use minopt::backend::{exec_graph, exec_grid, schedule, ExecMode, GraphData, Layout, Op, SharedMut, State};
use minopt::frontend::compile_source;
use minopt::ir::{Loc, Offset};
use minopt::simplify::{canonicalize, eval_conditioned, lower_conditions};
use minopt::transform::build_solver_exprs;
use proptest::prelude::*;
use std::sync::Mutex;

fn bitwise(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn program_matches_conditioned_interpreter(
        ts in proptest::collection::vec(tree(Flavor::General), 1..4),
        seed in 0u64..1000,
    ) {
        let spec = problem();
        let mut ar = spec.arena.clone();
        let roots: Vec<_> = ts.iter().map(|t| {
            let raw = build_raw(&mut ar, t);
            canonicalize(&mut ar, raw)
        }).collect();
        let cir = lower_conditions(&mut ar, &roots);
        let prog = schedule(&ar, &cir).unwrap();
        prop_assert!(prog.check_guards().is_ok(), "{:?}\n{}", prog.check_guards(), prog.disassemble());

        let st = random_state(&spec, Flavor::General, seed);
        let lay = layout(&spec);
        let inputs = st.inputs(&lay, &[]);
        let n = spec.domain_len(0);
        let k = roots.len();
        let run = |mode| {
            let mut out = vec![0.0; n * k];
            let shared = SharedMut::new(&mut out);
            exec_grid(&prog, &inputs, spec.domain_shape(0), mode, &|e, o: &[f64]| {
                for (c, &v) in o.iter().enumerate() {
                    unsafe { shared.write(e * k + c, v) };
                }
            }).unwrap();
            out
        };
        let seq = run(ExecMode::Sequential);
        let par = run(ExecMode::Parallel);
        for (e, s) in sites(&spec).into_iter().enumerate() {
            let want = eval_conditioned(&ar, &cir, &env(inputs, s)).unwrap();
            for c in 0..k {
                prop_assert!(bitwise(want[c], seq[e * k + c]), "element {e} output {c}: {} vs {}\n{}", want[c], seq[e * k + c], prog.disassemble());
                prop_assert!(bitwise(seq[e * k + c], par[e * k + c]));
            }
        }
    }
}

#[test]
fn laplacian_residual_kernel() {
    let (mut spec, st) = laplacian2();
    let exprs = build_solver_exprs(&mut spec);
    let cir = lower_conditions(&mut spec.arena, &exprs.residuals);
    let prog = schedule(&spec.arena, &cir).unwrap();
    let layout = Layout::new(&spec);
    let seen = Mutex::new(Vec::new());
    let rep = exec_grid(&prog, &st.inputs(&layout, &[]), spec.domain_shape(0), ExecMode::Sequential, &|e, o: &[f64]| {
        seen.lock().unwrap().push((e, o.to_vec()));
    })
    .unwrap();
    let seen = seen.into_inner().unwrap();
    assert_eq!(seen, vec![(0, vec![-1.0, 0.0]), (1, vec![0.0, 0.0])]);
    assert_eq!(rep.sum_squares.iter().sum::<f64>(), 1.0);
    assert!(!rep.non_finite);
}

#[test]
fn zero_extent_grid_is_a_no_op() {
    let spec = compile_source("dim W 0\nunknown X[W]\nenergy X(0)", &[]).unwrap();
    let mut ar = spec.arena.clone();
    let cir = lower_conditions(&mut ar, &[spec.templates[0].expr]);
    let prog = schedule(&ar, &cir).unwrap();
    let st: State<f64> = State::zeros(&spec);
    let layout = Layout::new(&spec);
    let rep = exec_grid(&prog, &st.inputs(&layout, &[]), spec.domain_shape(0), ExecMode::Parallel, &|_, _| {
        panic!("no elements")
    })
    .unwrap();
    assert_eq!(rep.sums, vec![0.0]);
}

const EDGE: &str = "
dim V 2
unknown X[V]
graph G(a, b)
energy X(G.a) - X(G.b)
";

fn scatter_jtj(edges: Vec<u64>, mode: ExecMode, x: Vec<f64>, p: Vec<f64>) -> Vec<f64> {
    let mut spec = compile_source(EDGE, &[]).unwrap();
    let exprs = build_solver_exprs(&mut spec);
    let g = &exprs.graph[0];
    let roots: Vec<_> = g.jtj.iter().map(|s| s.expr).collect();
    let slots: Vec<usize> = g
        .jtj
        .iter()
        .map(|s| match s.target.loc {
            Loc::Slot { slot, .. } => slot as usize,
            _ => unreachable!(),
        })
        .collect();
    let cir = lower_conditions(&mut spec.arena, &roots);
    let prog = schedule(&spec.arena, &cir).unwrap();
    let mut st: State<f64> = State::zeros(&spec);
    st.x = x;
    st.graphs[0] = GraphData::new(2, edges).unwrap();
    let layout = Layout::new(&spec);
    let mut out = vec![0.0; 2];
    let cells = f64::as_atomic_cells(&mut out);
    let sink = |_e: usize, v: &[u64], o: &[f64]| {
        for (k, &val) in o.iter().enumerate() {
            cells.add(v[slots[k]] as usize, val);
        }
    };
    exec_graph(&prog, &st.inputs(&layout, &p), &st.graphs[0], mode, &sink).unwrap();
    out
}

trait Cells {
    fn as_atomic_cells(v: &mut [f64]) -> AtomicCells<'_>;
}

struct AtomicCells<'a>(&'a [std::sync::atomic::AtomicU64]);

impl AtomicCells<'_> {
    fn add(&self, i: usize, v: f64) {
        <f64 as minopt::Real>::atomic_add(&self.0[i], v);
    }
}

impl Cells for f64 {
    fn as_atomic_cells(v: &mut [f64]) -> AtomicCells<'_> {
        AtomicCells(<f64 as minopt::Real>::as_atomic(v))
    }
}

#[test]
fn one_edge_jtj_scatter() {
    assert_eq!(scatter_jtj(vec![0, 1], ExecMode::Sequential, vec![0.0, 0.0], vec![1.0, 0.0]), vec![2.0, -2.0]);
    assert_eq!(scatter_jtj(vec![0, 1], ExecMode::Parallel, vec![0.0, 0.0], vec![1.0, 0.0]), vec![2.0, -2.0]);
}

#[test]
fn empty_edge_table_leaves_zeros() {
    assert_eq!(scatter_jtj(vec![], ExecMode::Sequential, vec![0.0, 0.0], vec![1.0, 0.0]), vec![0.0, 0.0]);
}

#[test]
fn sequential_scatter_is_reproducible() {
    let a = scatter_jtj(vec![0, 1, 1, 0], ExecMode::Sequential, vec![0.3, 0.1], vec![0.7, -1.3]);
    let b = scatter_jtj(vec![0, 1, 1, 0], ExecMode::Sequential, vec![0.3, 0.1], vec![0.7, -1.3]);
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn edge_past_the_vertex_domain_is_rejected() {
    let mut spec = compile_source(EDGE, &[]).unwrap();
    let exprs = build_solver_exprs(&mut spec);
    let cir = lower_conditions(&mut spec.arena, &[exprs.graph[0].residual]);
    let prog = schedule(&spec.arena, &cir).unwrap();
    let st: State<f64> = State::zeros(&spec);
    let layout = Layout::new(&spec);
    let g = GraphData::new(2, vec![0, 5]).unwrap();
    let err = exec_graph(&prog, &st.inputs(&layout, &[]), &g, ExecMode::Sequential, &|_, _, _| {}).unwrap_err();
    assert!(matches!(err, minopt::Error::IndexOutOfRange { edge: 0, vertex: 5, extent: 2 }));
}

#[test]
fn same_bounds_guard_forms_one_block() {
    let spec = problem();
    let mut ar = spec.arena.clone();
    let b = ar.in_bounds(Offset::new(&[1, 0]));
    let x1 = ar.access(access(3, 1, 0));
    let a1 = ar.access(access(0, 1, 0));
    let e1 = ar.mul(&[b, x1]);
    let sq = ar.powi(a1, 2);
    let e2 = ar.mul(&[b, sq]);
    let cir = lower_conditions(&mut ar, &[e1, e2]);
    let prog = schedule(&ar, &cir).unwrap();
    let guarded: Vec<_> = prog.blocks.iter().filter(|bl| prog.guard_exprs[bl.guard as usize] == vec![b]).collect();
    assert_eq!(guarded.len(), 1, "{}", prog.disassemble());
    prog.check_guards().unwrap();
}

#[test]
fn straight_line_polynomial_has_only_the_true_guard() {
    let spec = problem();
    let mut ar = spec.arena.clone();
    let x = ar.access(access(3, 0, 0));
    let a = ar.access(access(0, 0, 0));
    let d = ar.sub(x, a);
    let e = ar.powi(d, 2);
    let cir = lower_conditions(&mut ar, &[e]);
    let prog = schedule(&ar, &cir).unwrap();
    assert_eq!(prog.guards.len(), 1);
    assert!(prog.guards[0].is_empty());
}

#[test]
fn shared_subterm_is_computed_once() {
    let spec = problem();
    let mut ar = spec.arena.clone();
    let x = ar.access(access(3, 0, 0));
    let a = ar.access(access(0, 0, 0));
    let s = ar.add(&[x, a]);
    let l = ar.unary(minopt::ir::UnaryFn::Sin, s);
    let r = ar.unary(minopt::ir::UnaryFn::Cos, s);
    let e = ar.mul(&[l, r]);
    let cir = lower_conditions(&mut ar, &[e]);
    let prog = schedule(&ar, &cir).unwrap();
    let adds = prog.instrs.iter().filter(|i| matches!(i.op, Op::Add(..))).count();
    // The shared sum, plus the accumulation into the output.
    assert_eq!(adds, 2, "{}", prog.disassemble());
    assert!(prog.n_regs <= 4, "{}", prog.disassemble());
}

#[test]
fn disassembly_lists_one_instruction_per_line() {
    let (mut spec, _) = laplacian2();
    let exprs = build_solver_exprs(&mut spec);
    let cir = lower_conditions(&mut spec.arena, &exprs.residuals);
    let prog = schedule(&spec.arena, &cir).unwrap();
    let text = prog.disassemble();
    let lines = text.lines().filter(|l| l.contains('=')).count();
    assert_eq!(lines, prog.instrs.len() + 1, "{text}");
    assert!(text.contains("inbounds (1,0,0)"), "{text}");
}

#[test]
fn laplacian_jtj_kernel_matches_dense() {
    let (mut spec, st) = laplacian2();
    let exprs = build_solver_exprs(&mut spec);
    let cir = lower_conditions(&mut spec.arena, &exprs.stencil[0].jtj);
    let prog = schedule(&spec.arena, &cir).unwrap();
    let layout = Layout::new(&spec);
    let p = vec![1.0, 0.0];
    let mut out = vec![0.0; 2];
    let shared = SharedMut::new(&mut out);
    exec_grid(&prog, &st.inputs(&layout, &p), spec.domain_shape(0), ExecMode::Sequential, &|e, o: &[f64]| unsafe {
        shared.write(e, o[0])
    })
    .unwrap();
    let (j, _) = dense_j(&spec, &exprs, &st);
    let jp = j_times(&j, &p);
    let want: Vec<f64> = jt_times(&j, &jp).iter().map(|v| 2.0 * v).collect();
    assert_eq!(out, want);
    assert_eq!(out, vec![4.0, -2.0]);
}
