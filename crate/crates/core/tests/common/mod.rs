#![allow(dead_code)]
pub mod gen;

use minopt::backend::{flatten, unflatten, ElementEnv, Inputs, Layout, Site, State};
use minopt::frontend::{compile_source, ProblemSpec, TemplateDomain};
use minopt::ir::{eval_expr, ExprId, Loc};
use minopt::transform::SolverExprs;

/// Two pixels, a fit term and a forward-difference smoothness term.
pub const LAPLACIAN: &str = "
dim W 2
dim H 1
unknown X[W,H]
array A[W,H]
param w_fit
param w_reg
energy w_fit*(X(0,0) - A(0,0))
energy w_reg*select(inbounds(1,0), X(0,0) - X(1,0), 0)
";

pub fn laplacian2() -> (ProblemSpec, State<f64>) {
    let spec = compile_source(LAPLACIAN, &[]).unwrap();
    let mut st = State::zeros(&spec);
    st.params = vec![1.0, 1.0];
    st.arrays[0] = vec![1.0, 0.0];
    (spec, st)
}

/// Value of a stencil expression at every element of domain `d`.
pub fn eval_stencil(spec: &ProblemSpec, inputs: Inputs<'_, f64>, d: usize, e: ExprId) -> Vec<f64> {
    let shape = spec.domain_shape(d);
    (0..spec.domain_len(d))
        .map(|i| {
            let env = ElementEnv { inputs, site: Site::Grid { shape, coords: unflatten(&shape, i) } };
            eval_expr(&spec.arena, e, &env).unwrap()
        })
        .collect()
}

/// Dense J built from the symbolic partials, rows template-major.
pub fn dense_j(spec: &ProblemSpec, exprs: &SolverExprs, st: &State<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let layout = Layout::new(spec);
    let inputs = st.inputs(&layout, &[]);
    let mut rows = Vec::new();
    let mut f = Vec::new();
    for (t, tpl) in spec.templates.iter().enumerate() {
        let sites: Vec<(Site<'_>, Option<[usize; 3]>, Option<&[u64]>)> = match tpl.domain {
            TemplateDomain::Stencil(d) => {
                let shape = spec.domain_shape(d);
                (0..spec.domain_len(d))
                    .map(|i| {
                        let c = unflatten(&shape, i);
                        (Site::Grid { shape, coords: c }, Some(c), None)
                    })
                    .collect()
            }
            TemplateDomain::Graph(g) => {
                let gd = &st.graphs[g];
                (0..gd.edge_count()).map(|e| (Site::Edge { vertices: gd.edge(e) }, None, Some(gd.edge(e)))).collect()
            }
        };
        for (site, coords, verts) in sites {
            let env = ElementEnv { inputs, site };
            f.push(eval_expr(&spec.arena, exprs.residuals[t], &env).unwrap());
            let mut row = vec![0.0; layout.n];
            for entry in exprs.j.iter().filter(|e| e.template == t) {
                let fl = layout.field(entry.access.source);
                let elem = match (entry.access.loc, coords, verts) {
                    (Loc::Offset(o), Some(c), _) => match minopt::backend::neighbor(&fl.shape, &c, o) {
                        Some(n) => flatten(&fl.shape, &n),
                        None => continue,
                    },
                    (Loc::Slot { slot, .. }, _, Some(v)) => v[slot as usize] as usize,
                    _ => unreachable!(),
                };
                row[layout.index(&entry.access, elem)] += eval_expr(&spec.arena, entry.partial, &env).unwrap();
            }
            rows.push(row);
        }
    }
    (rows, f)
}

pub fn jt_times(j: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let n = j.first().map_or(0, |r| r.len());
    let mut out = vec![0.0; n];
    for (row, &vi) in j.iter().zip(v) {
        for (o, &a) in out.iter_mut().zip(row) {
            *o += a * vi;
        }
    }
    out
}

pub fn j_times(j: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    j.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn rel_linf(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1e-300f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}
