//! Gauss-Newton / Levenberg-Marquardt outer loop.

use std::fmt::Write as _;
use std::time::Instant;

use crate::backend::{ExecMode, State};
use crate::error::{Error, Result};
use crate::real::Real;

use super::config::{Materialize, Method, SolveConfig};
use super::lm::TrustRegion;
use super::pcg::{dot, pcg, PcgBuffers, PcgOutcome, PcgSettings};
use super::plan::CompiledPlan;
use super::sparse::SparseCsr;

/// One row per nonlinear iteration; row 0 is the starting point.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// Cost after the iteration.
    pub cost: f64,
    pub accepted: bool,
    /// Trust-region radius after the iteration (0 for Gauss-Newton).
    pub radius: f64,
    pub pcg_iters: usize,
    pub wall_ms: f64,
}

pub const TRACE_HEADER: &str = "iter,cost,accepted,radius,pcg_iters,wall_ms";

/// Header line, then one line per row.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{:e},{},{:e},{},{:.3}", r.iter, r.cost, r.accepted as u8, r.radius, r.pcg_iters, r.wall_ms);
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    MaxIterations,
    CostConverged,
    NonFiniteCost,
}

impl Termination {
    pub fn describe(self) -> &'static str {
        match self {
            Termination::MaxIterations => "reached the nonlinear iteration limit",
            Termination::CostConverged => "relative cost decrease fell below the stopping tolerance",
            Termination::NonFiniteCost => "cost became non-finite",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub trace: Vec<TraceRow>,
    pub termination: Termination,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Non-excluded unknowns whose preconditioner entry was not positive.
    pub unconstrained: usize,
    /// PCG solves stopped by a non-positive curvature.
    pub indefinite_solves: usize,
    /// Largest materialized matrix storage, in bytes.
    pub matrix_bytes: usize,
    pub total_pcg_iters: usize,
}

impl SolveResult {
    pub fn trace_csv(&self) -> String {
        trace_csv(&self.trace)
    }

    pub fn succeeded(&self) -> bool {
        self.termination != Termination::NonFiniteCost
    }
}

/// Called after every nonlinear iteration with the state it produced; may edit
/// arrays, parameters and graphs (not their sizes) before the next iteration.
pub type Callback<'a, T> = dyn FnMut(&TraceRow, &mut State<T>) -> Result<()> + 'a;

/// Linear operator of one nonlinear iteration.
enum Operator<T> {
    MatrixFree,
    J(SparseCsr<T>, Vec<T>),
    H(SparseCsr<T>),
}

struct Linearization<T> {
    b: Vec<T>,
    /// `diag(2JᵀJ)`, undamped.
    diag: Vec<T>,
    m: Vec<T>,
    damping: Vec<T>,
    excluded: Vec<bool>,
}

fn mode(cfg: &SolveConfig) -> ExecMode {
    if cfg.parallel {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    }
}

impl CompiledPlan {
    /// `A v` of the current operator, plus damping.
    fn apply<T: Real>(
        &self,
        op: &mut Operator<T>,
        st: &State<T>,
        damping: Option<&[T]>,
        v: &[T],
        out: &mut [T],
        mode: ExecMode,
    ) -> Result<()> {
        match op {
            Operator::MatrixFree => {
                self.apply_jtj(st, v, mode, out)?;
            }
            Operator::J(j, jv) => {
                j.mul_vec(v, jv);
                j.mul_transpose_vec(jv, out);
                let two = T::from_f64(2.0);
                for o in out.iter_mut() {
                    *o = two * *o;
                }
            }
            Operator::H(h) => h.mul_vec(v, out),
        }
        if let Some(d) = damping {
            for i in 0..out.len() {
                out[i] = out[i] + d[i] * v[i];
            }
        }
        Ok(())
    }

    /// Runs the configured number of nonlinear iterations on `st.x`.
    pub fn solve<T: Real>(
        &self,
        st: &mut State<T>,
        cfg: &SolveConfig,
        mut callback: Option<&mut Callback<'_, T>>,
    ) -> Result<SolveResult> {
        cfg.validate()?;
        if cfg.materialize != self.materialize {
            return Err(Error::Config(format!(
                "plan compiled for materialize={}, solve asked for {}",
                self.materialize.name(),
                cfg.materialize.name()
            )));
        }
        st.check(&self.layout)?;
        let mode = mode(cfg);
        let n = self.n();
        let start = Instant::now();
        let lm = cfg.method == Method::LevenbergMarquardt;
        let mut region = TrustRegion::new(cfg.initial_radius, cfg.min_radius, cfg.max_radius, cfg.min_relative_decrease);
        let mut lin = Linearization {
            b: vec![T::zero(); n],
            diag: vec![T::zero(); n],
            m: vec![T::zero(); n],
            damping: vec![T::zero(); n],
            excluded: vec![false; n],
        };
        let mut delta = vec![T::zero(); n];
        let mut x_old = vec![T::zero(); n];
        let mut bufs = PcgBuffers::new(n);
        let settings =
            PcgSettings { max_iters: cfg.linear_iters, rel_tol: cfg.pcg_rel_tol, abs_tol: cfg.pcg_abs_tol };

        self.recompute_computed(st, mode, false)?;
        let (c0, bad0) = self.cost(st, mode)?;
        let mut result = SolveResult {
            trace: vec![TraceRow {
                iter: 0,
                cost: c0.to_f64(),
                accepted: true,
                radius: if lm { region.mu } else { 0.0 },
                pcg_iters: 0,
                wall_ms: 0.0,
            }],
            termination: Termination::MaxIterations,
            initial_cost: c0.to_f64(),
            final_cost: c0.to_f64(),
            unconstrained: 0,
            indefinite_solves: 0,
            matrix_bytes: 0,
            total_pcg_iters: 0,
        };
        if bad0 {
            result.termination = Termination::NonFiniteCost;
            return Ok(result);
        }

        for iter in 1..=cfg.nonlinear_iters {
            self.recompute_computed(st, mode, false)?;
            let (cost_old, _) = self.cost(st, mode)?;
            self.linearize(st, mode, &mut lin.b, &mut lin.diag, &mut lin.excluded)?;
            let lambda = T::from_f64(region.lambda());
            let (dmin, dmax) = (T::from_f64(cfg.min_diagonal), T::from_f64(cfg.max_diagonal));
            let two = T::from_f64(2.0);
            let mut unconstrained = 0;
            for i in 0..n {
                if lin.excluded[i] {
                    lin.m[i] = T::one();
                    lin.damping[i] = T::zero();
                    continue;
                }
                lin.damping[i] = if lm { two * lambda * (lin.diag[i] / two).max(dmin).min(dmax) } else { T::zero() };
                let m = if cfg.use_preconditioner { lin.diag[i] + lin.damping[i] } else { T::one() };
                lin.m[i] = if m > T::zero() {
                    m
                } else {
                    unconstrained += 1;
                    T::one()
                };
            }
            result.unconstrained = result.unconstrained.max(unconstrained);

            let mut op = match cfg.materialize {
                Materialize::None => Operator::MatrixFree,
                Materialize::J => {
                    let j = self.jacobian(st, mode)?;
                    result.matrix_bytes = result.matrix_bytes.max(j.bytes());
                    let rows = j.rows;
                    Operator::J(j, vec![T::zero(); rows])
                }
                Materialize::JtJ => {
                    let j = self.jacobian(st, mode)?;
                    let h = j.normal_matrix();
                    result.matrix_bytes = result.matrix_bytes.max(j.bytes() + h.bytes());
                    Operator::H(h)
                }
            };
            let damping = lm.then_some(lin.damping.as_slice());
            let outcome: PcgOutcome = {
                let st_ref: &State<T> = st;
                let mut apply = |v: &[T], out: &mut [T]| self.apply(&mut op, st_ref, damping, v, out, mode);
                pcg(&mut apply, &lin.b, &lin.m, &lin.excluded, settings, &mut delta, &mut bufs)?
            };
            result.total_pcg_iters += outcome.iters;
            if outcome.indefinite {
                result.indefinite_solves += 1;
            }

            // Model decrease bᵀδ - ½δᵀ(2JᵀJ)δ, evaluated at the linearization point.
            let predicted = if lm {
                self.apply(&mut op, st, None, &delta, &mut bufs.ap, mode)?;
                dot(&lin.b, &delta).to_f64() - 0.5 * dot(&delta, &bufs.ap).to_f64()
            } else {
                0.0
            };
            x_old.copy_from_slice(&st.x);
            for ((x, &d), &ex) in st.x.iter_mut().zip(&delta).zip(&lin.excluded) {
                if !ex {
                    *x = *x + d;
                }
            }
            self.recompute_computed(st, mode, true)?;
            let (cost_new, _) = self.cost(st, mode)?;
            let accepted = if lm {
                let ok = !outcome.non_finite && region.step(cost_old.to_f64(), cost_new.to_f64(), predicted);
                if !ok {
                    st.x.copy_from_slice(&x_old);
                    self.recompute_computed(st, mode, true)?;
                }
                ok
            } else {
                true
            };
            let cost_now = if accepted { cost_new } else { cost_old };
            let row = TraceRow {
                iter,
                cost: cost_now.to_f64(),
                accepted,
                radius: if lm { region.mu } else { 0.0 },
                pcg_iters: outcome.iters,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            result.final_cost = row.cost;
            result.trace.push(row.clone());
            if !cost_now.is_finite() {
                result.termination = Termination::NonFiniteCost;
                return Ok(result);
            }
            if let Some(cb) = callback.as_mut() {
                cb(&row, st)?;
                st.check(&self.layout)?;
            }
            let old = cost_old.to_f64();
            if cfg.cost_stop_tol > 0.0 && accepted && old > 0.0 && (old - row.cost) / old < cfg.cost_stop_tol {
                result.termination = Termination::CostConverged;
                break;
            }
        }
        Ok(result)
    }
}
