//! Compiled kernels of a problem and the passes that run them.

use crate::backend::{
    exec_graph, exec_grid, flatten, neighbor, schedule, unflatten, ExecMode, ExecReport, KernelProgram, Layout,
    SharedMut, State,
};
use crate::error::{Error, Result};
use crate::frontend::{ComputedMode, DomainId, ProblemSpec, TemplateDomain};
use crate::ir::{Access, ExprId, Loc, Source};
use crate::real::Real;
use crate::simplify::lower_conditions;
use crate::transform::{build_solver_exprs, Scatter, SolverExprs};

use super::config::{Materialize, SolveConfig};
use super::sparse::SparseCsr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelSite {
    Grid(DomainId),
    Graph(usize),
}

#[derive(Clone, Debug)]
pub struct Kernel {
    pub name: String,
    pub site: KernelSite,
    pub prog: KernelProgram,
}

/// Where the outputs of a vector kernel go.
#[derive(Clone, Debug)]
pub enum Targets {
    /// Output `c` belongs to channel `c` of `unknown` at the running element.
    Stencil { unknown: usize, channels: usize },
    /// Output `k` is added at `targets[k]`, resolved through the running edge.
    Graph(Vec<Access>),
}

#[derive(Clone, Debug)]
pub struct VectorKernel {
    pub kernel: Kernel,
    pub targets: Targets,
}

#[derive(Clone, Debug)]
pub struct CostKernel {
    pub kernel: Kernel,
    /// Template of each output.
    pub templates: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct JKernel {
    pub kernel: Kernel,
    pub template: usize,
    /// Unknown access of each output partial.
    pub columns: Vec<Access>,
}

#[derive(Clone, Debug)]
pub struct ComputedKernel {
    pub index: usize,
    pub kernel: Kernel,
}

#[derive(Clone, Debug)]
pub struct ExcludeKernel {
    pub domain: DomainId,
    pub kernel: Kernel,
}

/// Everything compiled for one problem; immutable during a solve.
#[derive(Clone, Debug)]
pub struct CompiledPlan {
    pub spec: ProblemSpec,
    pub exprs: SolverExprs,
    pub layout: Layout,
    pub materialize: Materialize,
    pub cost: Vec<CostKernel>,
    /// Outputs: `-2JᵀF` entries, then `diag(2JᵀJ)` entries.
    pub jtf: Vec<VectorKernel>,
    /// `2JᵀJp`; empty when J is materialized.
    pub jtj: Vec<VectorKernel>,
    pub j: Vec<JKernel>,
    pub computed: Vec<ComputedKernel>,
    pub exclude: Vec<ExcludeKernel>,
}

fn compile(spec: &mut ProblemSpec, name: String, site: KernelSite, roots: &[ExprId]) -> Result<Kernel> {
    let cir = lower_conditions(&mut spec.arena, roots);
    let prog = schedule(&spec.arena, &cir)?;
    prog.check_guards().map_err(|m| Error::Internal(format!("kernel {name}: {m}")))?;
    Ok(Kernel { name, site, prog })
}

fn scatter_targets(s: &[Scatter]) -> (Vec<ExprId>, Vec<Access>) {
    s.iter().map(|s| (s.expr, s.target)).unzip()
}

/// Compiles the kernels `cfg` needs. Evaluation of J is also compiled when
/// `with_j` is set, whatever the materialization mode.
pub fn plan(mut spec: ProblemSpec, cfg: &SolveConfig, with_j: bool) -> Result<CompiledPlan> {
    cfg.validate()?;
    crate::frontend::validate(&spec)?;
    let exprs = build_solver_exprs(&mut spec);
    let layout = Layout::new(&spec);
    let n_templates = spec.templates.len();

    let mut cost = Vec::new();
    for d in 0..spec.domains.len() {
        let templates: Vec<usize> =
            (0..n_templates).filter(|&t| spec.templates[t].domain == TemplateDomain::Stencil(d)).collect();
        if !templates.is_empty() {
            let roots: Vec<ExprId> = templates.iter().map(|&t| exprs.residuals[t]).collect();
            let name = format!("evalF{}", spec.domain_name(d));
            let kernel = compile(&mut spec, name, KernelSite::Grid(d), &roots)?;
            cost.push(CostKernel { kernel, templates });
        }
    }
    for g in 0..spec.graphs.len() {
        let templates: Vec<usize> =
            (0..n_templates).filter(|&t| spec.templates[t].domain == TemplateDomain::Graph(g)).collect();
        if !templates.is_empty() {
            let roots: Vec<ExprId> = templates.iter().map(|&t| exprs.residuals[t]).collect();
            let name = format!("evalF.{}", spec.graphs[g].name);
            let kernel = compile(&mut spec, name, KernelSite::Graph(g), &roots)?;
            cost.push(CostKernel { kernel, templates });
        }
    }

    let mut jtf = Vec::new();
    let mut jtj = Vec::new();
    let matrix_free = cfg.materialize == Materialize::None;
    for r in exprs.stencil.clone() {
        let decl = spec.unknowns[r.unknown].clone();
        let targets = Targets::Stencil { unknown: r.unknown, channels: decl.channels };
        let mut roots = r.jtf.clone();
        roots.extend(&r.precond);
        if roots.iter().all(|&e| spec.arena.is_const(e, 0.0)) {
            continue;
        }
        let site = KernelSite::Grid(decl.domain);
        let kernel = compile(&mut spec, format!("evalJTF.{}", decl.name), site, &roots)?;
        jtf.push(VectorKernel { kernel, targets: targets.clone() });
        if matrix_free {
            let kernel = compile(&mut spec, format!("applyJTJ.{}", decl.name), site, &r.jtj)?;
            jtj.push(VectorKernel { kernel, targets });
        }
    }
    for r in exprs.graph.clone() {
        if r.jtf.is_empty() {
            continue;
        }
        let site = KernelSite::Graph(r.graph);
        let name = spec.templates[r.template].name.clone();
        let (mut roots, mut targets) = scatter_targets(&r.jtf);
        let (pre_roots, pre_targets) = scatter_targets(&r.precond);
        roots.extend(pre_roots);
        targets.extend(pre_targets);
        let kernel = compile(&mut spec, format!("evalJTF.{name}"), site, &roots)?;
        jtf.push(VectorKernel { kernel, targets: Targets::Graph(targets) });
        if matrix_free {
            let (roots, targets) = scatter_targets(&r.jtj);
            let kernel = compile(&mut spec, format!("applyJTJ.{name}"), site, &roots)?;
            jtj.push(VectorKernel { kernel, targets: Targets::Graph(targets) });
        }
    }

    let mut j = Vec::new();
    if with_j || !matrix_free {
        for t in 0..n_templates {
            let entries: Vec<_> = exprs.j.iter().filter(|e| e.template == t).cloned().collect();
            if entries.is_empty() {
                continue;
            }
            let site = match spec.templates[t].domain {
                TemplateDomain::Stencil(d) => KernelSite::Grid(d),
                TemplateDomain::Graph(g) => KernelSite::Graph(g),
            };
            let roots: Vec<ExprId> = entries.iter().map(|e| e.partial).collect();
            let name = format!("evalJ.{}", spec.templates[t].name);
            let kernel = compile(&mut spec, name, site, &roots)?;
            j.push(JKernel { kernel, template: t, columns: entries.iter().map(|e| e.access).collect() });
        }
    }

    let mut computed = Vec::new();
    for i in 0..spec.computed.len() {
        let c = spec.computed[i].clone();
        let mut roots = c.defs.clone();
        if c.mode == ComputedMode::Cache {
            roots.extend(c.partials.iter().flatten());
        }
        let kernel = compile(&mut spec, format!("computed.{}", c.name), KernelSite::Grid(c.domain), &roots)?;
        computed.push(ComputedKernel { index: i, kernel });
    }

    let mut exclude = Vec::new();
    for d in 0..spec.domains.len() {
        let preds: Vec<ExprId> = spec.excludes.iter().filter(|e| e.domain == d).map(|e| e.predicate).collect();
        if !preds.is_empty() {
            let name = format!("exclude{}", spec.domain_name(d));
            let kernel = compile(&mut spec, name, KernelSite::Grid(d), &preds)?;
            exclude.push(ExcludeKernel { domain: d, kernel });
        }
    }

    Ok(CompiledPlan { spec, exprs, layout, materialize: cfg.materialize, cost, jtf, jtj, j, computed, exclude })
}

impl CompiledPlan {
    /// Number of scalar unknowns.
    pub fn n(&self) -> usize {
        self.layout.n
    }

    pub fn kernels(&self) -> impl Iterator<Item = &Kernel> {
        self.cost
            .iter()
            .map(|k| &k.kernel)
            .chain(self.jtf.iter().map(|k| &k.kernel))
            .chain(self.jtj.iter().map(|k| &k.kernel))
            .chain(self.j.iter().map(|k| &k.kernel))
            .chain(self.computed.iter().map(|k| &k.kernel))
            .chain(self.exclude.iter().map(|k| &k.kernel))
    }

    /// A zero state with every graph empty.
    pub fn zero_state<T: Real>(&self) -> State<T> {
        State::zeros(&self.spec)
    }

    /// Residual rows of each template for the bound graphs.
    pub fn template_rows<T: Real>(&self, st: &State<T>) -> Vec<usize> {
        self.spec
            .templates
            .iter()
            .map(|t| match t.domain {
                TemplateDomain::Stencil(d) => self.spec.domain_len(d),
                TemplateDomain::Graph(g) => st.graphs[g].edge_count(),
            })
            .collect()
    }

    fn run<T: Real>(
        &self,
        k: &Kernel,
        st: &State<T>,
        p: &[T],
        mode: ExecMode,
        grid_sink: &(dyn Fn(usize, &[T]) + Sync),
        graph_sink: &(dyn Fn(usize, &[u64], &[T]) + Sync),
    ) -> Result<ExecReport<T>> {
        let inputs = st.inputs(&self.layout, p);
        match k.site {
            KernelSite::Grid(d) => exec_grid(&k.prog, &inputs, self.spec.domain_shape(d), mode, grid_sink),
            KernelSite::Graph(g) => exec_graph(&k.prog, &inputs, &st.graphs[g], mode, graph_sink),
        }
    }

    /// Evaluates every computed array over its domain, in declaration order.
    /// With `cache_only`, frozen arrays keep their values.
    pub fn recompute_computed<T: Real>(&self, st: &mut State<T>, mode: ExecMode, cache_only: bool) -> Result<()> {
        for ck in &self.computed {
            let decl = &self.spec.computed[ck.index];
            if cache_only && decl.mode != ComputedMode::Cache {
                continue;
            }
            let width = decl.stored_channels();
            let mut buf = std::mem::take(&mut st.computed[ck.index]);
            {
                let out = SharedMut::new(&mut buf);
                let sink = |e: usize, o: &[T]| {
                    for (c, &v) in o.iter().enumerate() {
                        // SAFETY: element `e` owns entries e*width .. (e+1)*width.
                        unsafe { out.write(e * width + c, v) };
                    }
                };
                let r = self.run(&ck.kernel, st, &[], mode, &sink, &|_, _, _| {});
                if let Err(e) = r {
                    st.computed[ck.index] = buf;
                    return Err(e);
                }
            }
            st.computed[ck.index] = buf;
        }
        Ok(())
    }

    /// Marks scalar unknowns whose element satisfies an exclude predicate.
    pub fn exclusion_mask<T: Real>(&self, st: &State<T>, mode: ExecMode, mask: &mut [bool]) -> Result<()> {
        mask.fill(false);
        for ek in &self.exclude {
            let mut elem = vec![false; self.spec.domain_len(ek.domain)];
            {
                let out = SharedMut::new(&mut elem);
                let sink = |e: usize, o: &[T]| {
                    let hit = o.iter().any(|v| *v != T::zero());
                    // SAFETY: one flag per element.
                    unsafe { out.write(e, hit) };
                };
                self.run(&ek.kernel, st, &[], mode, &sink, &|_, _, _| {})?;
            }
            for (u, f) in self.layout.unknowns.iter().enumerate() {
                if self.spec.unknowns[u].domain != ek.domain {
                    continue;
                }
                for (e, &hit) in elem.iter().enumerate() {
                    if hit {
                        mask[f.base + e * f.channels..f.base + (e + 1) * f.channels].fill(true);
                    }
                }
            }
        }
        Ok(())
    }

    /// Cost `Σ f²` summed per template in template order, and whether any residual
    /// was non-finite.
    pub fn cost<T: Real>(&self, st: &State<T>, mode: ExecMode) -> Result<(T, bool)> {
        let mut per = vec![T::zero(); self.spec.templates.len()];
        let mut non_finite = false;
        for ck in &self.cost {
            let r = self.run(&ck.kernel, st, &[], mode, &|_, _| {}, &|_, _, _| {})?;
            non_finite |= r.non_finite;
            for (k, &t) in ck.templates.iter().enumerate() {
                per[t] = r.sum_squares[k];
            }
        }
        let total = per.into_iter().fold(T::zero(), |a, b| a + b);
        Ok((total, non_finite || !total.is_finite()))
    }

    /// Residual values in J row order (template-major).
    pub fn residuals<T: Real>(&self, st: &State<T>, mode: ExecMode) -> Result<Vec<T>> {
        let rows = self.template_rows(st);
        let mut base = vec![0; rows.len() + 1];
        for t in 0..rows.len() {
            base[t + 1] = base[t] + rows[t];
        }
        let mut f = vec![T::zero(); base[rows.len()]];
        {
            let out = SharedMut::new(&mut f);
            for ck in &self.cost {
                let tpl = &ck.templates;
                let grid = |e: usize, o: &[T]| {
                    for (k, &t) in tpl.iter().enumerate() {
                        // SAFETY: row base[t] + e belongs to element e.
                        unsafe { out.write(base[t] + e, o[k]) };
                    }
                };
                let graph = |e: usize, _: &[u64], o: &[T]| grid(e, o);
                self.run(&ck.kernel, st, &[], mode, &grid, &graph)?;
            }
        }
        Ok(f)
    }

    fn vector_pass<T: Real>(
        &self,
        kernels: &[VectorKernel],
        st: &State<T>,
        p: &[T],
        mode: ExecMode,
        outs: &mut [&mut [T]],
    ) -> Result<bool> {
        for o in outs.iter_mut() {
            o.fill(T::zero());
        }
        let mut non_finite = false;
        // Grid kernels first: their writes are disjoint per element.
        for vk in kernels {
            let Targets::Stencil { unknown, channels } = vk.targets else { continue };
            let base = self.layout.unknowns[unknown].base;
            let shared: Vec<SharedMut<'_, T>> = outs.iter_mut().map(|o| SharedMut::new(o)).collect();
            let sink = |e: usize, o: &[T]| {
                for (v, out) in shared.iter().enumerate() {
                    for c in 0..channels {
                        let i = base + e * channels + c;
                        // SAFETY: the entries of element `e` of this unknown are
                        // touched only by element `e`.
                        unsafe { out.write(i, out.get(i) + o[v * channels + c]) };
                    }
                }
            };
            non_finite |= self.run(&vk.kernel, st, p, mode, &sink, &|_, _, _| {})?.non_finite;
        }
        for vk in kernels {
            let Targets::Graph(targets) = &vk.targets else { continue };
            let per = targets.len() / outs.len();
            let cells: Vec<&[T::Atomic]> = outs.iter_mut().map(|o| T::as_atomic(o)).collect();
            let sink = |_: usize, verts: &[u64], o: &[T]| {
                for (k, t) in targets.iter().enumerate() {
                    let Loc::Slot { slot, .. } = t.loc else { continue };
                    let i = self.layout.index(t, verts[slot as usize] as usize);
                    T::atomic_add(&cells[k / per][i], o[k]);
                }
            };
            non_finite |= self.run(&vk.kernel, st, p, mode, &|_, _| {}, &sink)?.non_finite;
        }
        Ok(non_finite)
    }

    /// `b = -2JᵀF` and `m = diag(2JᵀJ)`.
    pub fn jtf<T: Real>(&self, st: &State<T>, mode: ExecMode, b: &mut [T], m: &mut [T]) -> Result<bool> {
        self.vector_pass(&self.jtf, st, &[], mode, &mut [b, m])
    }

    /// Evaluates the exclusion mask, then `b` and `m` as in [`CompiledPlan::jtf`]
    /// with excluded entries set to `b = 0`, `m = 1`.
    pub fn linearize<T: Real>(
        &self,
        st: &State<T>,
        mode: ExecMode,
        b: &mut [T],
        m: &mut [T],
        excluded: &mut [bool],
    ) -> Result<bool> {
        self.exclusion_mask(st, mode, excluded)?;
        let non_finite = self.jtf(st, mode, b, m)?;
        for i in 0..b.len() {
            if excluded[i] {
                b[i] = T::zero();
                m[i] = T::one();
            }
        }
        Ok(non_finite)
    }

    /// `out = 2JᵀJ p` without forming J. Requires a matrix-free plan.
    pub fn apply_jtj<T: Real>(&self, st: &State<T>, p: &[T], mode: ExecMode, out: &mut [T]) -> Result<bool> {
        if self.materialize != Materialize::None {
            return Err(Error::Config("plan was compiled without matrix-free products".into()));
        }
        self.vector_pass(&self.jtj, st, p, mode, &mut [out])
    }

    /// J as CSR, rows in template-major order. Columns that fall outside the
    /// unknown's domain are dropped; repeated columns within a row are summed.
    pub fn jacobian<T: Real>(&self, st: &State<T>, mode: ExecMode) -> Result<SparseCsr<T>> {
        let rows = self.template_rows(st);
        let mut blocks: Vec<Option<(usize, Vec<T>)>> = vec![None; rows.len()];
        for (ji, jk) in self.j.iter().enumerate() {
            let width = jk.columns.len();
            let mut vals = vec![T::zero(); rows[jk.template] * width];
            {
                let out = SharedMut::new(&mut vals);
                let grid = |e: usize, o: &[T]| {
                    for (k, &v) in o.iter().enumerate() {
                        // SAFETY: row `e` owns its `width` entries.
                        unsafe { out.write(e * width + k, v) };
                    }
                };
                let graph = |e: usize, _: &[u64], o: &[T]| grid(e, o);
                self.run(&jk.kernel, st, &[], mode, &grid, &graph)?;
            }
            blocks[jk.template] = Some((ji, vals));
        }
        let n = self.n();
        let mut row_entries: Vec<Vec<(usize, T)>> = Vec::new();
        for (t, tpl) in self.spec.templates.iter().enumerate() {
            let Some((ji, vals)) = &blocks[t] else {
                row_entries.extend(std::iter::repeat_with(Vec::new).take(rows[t]));
                continue;
            };
            let cols = &self.j[*ji].columns;
            let width = cols.len();
            for e in 0..rows[t] {
                let mut row = Vec::with_capacity(width);
                for (k, a) in cols.iter().enumerate() {
                    if let Some(c) = self.column(tpl.domain, st, a, e) {
                        row.push((c, vals[e * width + k]));
                    }
                }
                row_entries.push(row);
            }
        }
        Ok(SparseCsr::from_rows(n, row_entries))
    }

    fn column<T: Real>(&self, domain: TemplateDomain, st: &State<T>, a: &Access, e: usize) -> Option<usize> {
        let f = self.layout.field(a.source);
        debug_assert!(matches!(a.source, Source::Unknown(_)));
        match (a.loc, domain) {
            (Loc::Offset(o), TemplateDomain::Stencil(_)) => {
                let c = neighbor(&f.shape, &unflatten(&f.shape, e), o)?;
                Some(self.layout.index(a, flatten(&f.shape, &c)))
            }
            (Loc::Slot { slot, .. }, TemplateDomain::Graph(g)) => {
                Some(self.layout.index(a, st.graphs[g].edge(e)[slot as usize] as usize))
            }
            _ => None,
        }
    }
}
