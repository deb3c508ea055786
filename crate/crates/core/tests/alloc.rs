use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};

use minopt::backend::{ExecMode, State};
use minopt::frontend::compile_source;
use minopt::solver::{plan, SolveConfig};

struct Counting;

static COUNT: AtomicUsize = AtomicUsize::new(0);
static BYTES: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        COUNT.fetch_add(1, Ordering::Relaxed);
        BYTES.fetch_add(layout.size(), Ordering::Relaxed);
        System.alloc(layout)
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout)
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

/// Allocations made by one matrix-free `2JᵀJp` pass on an n×n grid.
fn apply_allocations(n: usize) -> (usize, usize) {
    let src = format!(
        "dim W {n}\ndim H {n}\nunknown X[W,H]:2\narray A[W,H]:2\n\
         energy X[0](0,0)*X[1](0,0) - A[0](0,0)\n\
         energy select(inbounds(1,0), X[0](0,0) - X[0](1,0), 0)\n\
         energy select(inbounds(0,1), sin(X[1](0,0)) - X[1](0,1), 0)"
    );
    let p = plan(compile_source(&src, &[]).unwrap(), &SolveConfig::default(), false).unwrap();
    let mut st: State<f64> = p.zero_state();
    st.x.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64).sin());
    let dir = vec![0.5; p.n()];
    let mut out = vec![0.0; p.n()];
    let (c0, b0) = (COUNT.load(Ordering::SeqCst), BYTES.load(Ordering::SeqCst));
    p.apply_jtj(&st, &dir, ExecMode::Sequential, &mut out).unwrap();
    (COUNT.load(Ordering::SeqCst) - c0, BYTES.load(Ordering::SeqCst) - b0)
}

#[test]
fn matrix_free_products_allocate_independently_of_problem_size() {
    let small = apply_allocations(8);
    let large = apply_allocations(96);
    assert_eq!(small, large);
}
