//! Side-by-side runs of the linear operator modes, and of two encodings of one problem.

use std::time::Instant;

use minopt::backend::{ExecMode, State};
use minopt::frontend::{ComputedMode, ProblemSpec};
use minopt::solver::{plan, Materialize, SolveConfig};
use minopt::{Precision, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bind::{bind_state, DataMap};
use crate::error::CliResult;
use crate::run::{solve, Problem, Run};

#[derive(Clone, Debug)]
pub struct ModeRow {
    pub mode: String,
    pub iterations: usize,
    pub final_cost: f64,
    /// Median over timed repetitions of one operator application, in microseconds.
    pub us_per_linear_iter: f64,
    /// Storage of the materialized matrices; 0 when matrix-free.
    pub matrix_bytes: usize,
    /// Largest relative L∞ distance of any iterate from the matrix-free run.
    pub divergence: f64,
    pub pcg_iters: usize,
}

#[derive(Clone, Debug)]
pub struct EncodingRow {
    pub name: String,
    pub final_cost: f64,
    pub cost_difference: f64,
    /// Present when both encodings have the same unknown layout.
    pub divergence: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct CompareReport {
    pub problem: String,
    pub rows: Vec<ModeRow>,
    pub against: Option<EncodingRow>,
}

impl CompareReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("mode,iterations,final_cost,us_per_linear_iter,matrix_bytes,divergence,pcg_iters\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:e},{:.3},{},{:e},{}\n",
                r.mode, r.iterations, r.final_cost, r.us_per_linear_iter, r.matrix_bytes, r.divergence, r.pcg_iters
            ));
        }
        s
    }

    pub fn max_divergence(&self) -> f64 {
        self.rows.iter().map(|r| r.divergence).fold(0.0, f64::max)
    }
}

impl std::fmt::Display for CompareReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{}", self.problem)?;
        write!(f, "{}", self.csv())?;
        if let Some(a) = &self.against {
            write!(f, "against {}: final cost {:e}, difference {:e}", a.name, a.final_cost, a.cost_difference)?;
            if let Some(d) = a.divergence {
                write!(f, ", iterate divergence {d:e}")?;
            }
        }
        Ok(())
    }
}

/// `max |a - b| / max(|b|∞, 1)`.
pub fn rel_linf(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(1.0, f64::max);
    num / den
}

/// Largest iterate distance of two recorded runs.
pub fn iterate_divergence(a: &Run, b: &Run) -> f64 {
    if a.iterates.len() != b.iterates.len() {
        return f64::INFINITY;
    }
    a.iterates.iter().zip(&b.iterates).map(|(x, y)| rel_linf(x, y)).fold(0.0, f64::max)
}

pub fn has_cache_arrays(spec: &ProblemSpec) -> bool {
    spec.computed.iter().any(|c| c.mode == ComputedMode::Cache)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

/// Times one application of the mode's operator at the starting state:
/// one warm-up, then the median of `reps` timed batches.
pub fn time_operator(spec: ProblemSpec, data: &DataMap, cfg: &SolveConfig, reps: usize) -> CliResult<f64> {
    match cfg.precision {
        Precision::F32 => time_typed::<f32>(spec, data, cfg, reps),
        Precision::F64 => time_typed::<f64>(spec, data, cfg, reps),
    }
}

fn time_typed<T: Real>(spec: ProblemSpec, data: &DataMap, cfg: &SolveConfig, reps: usize) -> CliResult<f64> {
    let plan = plan(spec, cfg, true)?;
    let mut st: State<T> = bind_state(&plan.spec, data)?;
    let mode = if cfg.parallel { ExecMode::Parallel } else { ExecMode::Sequential };
    plan.recompute_computed(&mut st, mode, false)?;
    let n = plan.n();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p: Vec<T> = (0..n).map(|_| T::from_f64(rng.gen_range(-1.0..1.0))).collect();
    let mut out = vec![T::zero(); n];
    let batch = 10;
    let time = |f: &mut dyn FnMut()| {
        f();
        let samples = (0..reps.max(1))
            .map(|_| {
                let t = Instant::now();
                for _ in 0..batch {
                    f();
                }
                t.elapsed().as_secs_f64() * 1e6 / batch as f64
            })
            .collect();
        median(samples)
    };
    Ok(match cfg.materialize {
        Materialize::None => {
            let mut err = None;
            let t = time(&mut || {
                if let Err(e) = plan.apply_jtj(&st, &p, mode, &mut out) {
                    err = Some(e);
                }
            });
            if let Some(e) = err {
                return Err(e.into());
            }
            t
        }
        Materialize::J => {
            let j = plan.jacobian(&st, mode)?;
            let mut jv = vec![T::zero(); j.rows];
            time(&mut || {
                j.mul_vec(&p, &mut jv);
                j.mul_transpose_vec(&jv, &mut out);
            })
        }
        Materialize::JtJ => {
            let h = plan.jacobian(&st, mode)?.normal_matrix();
            time(&mut || h.mul_vec(&p, &mut out))
        }
    })
}

/// Runs `problem` matrix-free, with J and with JᵀJ stored; `hybrid` is the
/// same problem with cache arrays, `against` a different encoding of it.
pub fn compare(
    problem: &Problem,
    base: &SolveConfig,
    hybrid: Option<&Problem>,
    against: Option<&Problem>,
    reps: usize,
) -> CliResult<CompareReport> {
    let spec = problem.spec()?;
    let free_label = if has_cache_arrays(&spec) { "hybrid" } else { "matrix-free" };
    let mut rows = Vec::new();
    let mut reference: Option<Run> = None;
    for m in [Materialize::None, Materialize::J, Materialize::JtJ] {
        let cfg = SolveConfig { materialize: m, ..base.clone() };
        let run = solve(spec.clone(), &problem.data, &cfg, true)?;
        let us = time_operator(spec.clone(), &problem.data, &cfg, reps)?;
        let divergence = reference.as_ref().map_or(0.0, |r| iterate_divergence(&run, r));
        rows.push(ModeRow {
            mode: if m == Materialize::None { free_label.to_string() } else { m.name().to_string() },
            iterations: run.result.trace.len() - 1,
            final_cost: run.result.final_cost,
            us_per_linear_iter: us,
            matrix_bytes: run.result.matrix_bytes,
            divergence,
            pcg_iters: run.result.total_pcg_iters,
        });
        if reference.is_none() {
            reference = Some(run);
        }
    }
    let reference = reference.expect("matrix-free run");
    if let Some(h) = hybrid {
        let cfg = SolveConfig { materialize: Materialize::None, ..base.clone() };
        let hs = h.spec()?;
        let run = solve(hs.clone(), &h.data, &cfg, true)?;
        rows.push(ModeRow {
            mode: "hybrid".into(),
            iterations: run.result.trace.len() - 1,
            final_cost: run.result.final_cost,
            us_per_linear_iter: time_operator(hs, &h.data, &cfg, reps)?,
            matrix_bytes: run.result.matrix_bytes,
            divergence: iterate_divergence(&run, &reference),
            pcg_iters: run.result.total_pcg_iters,
        });
    }
    let against = match against {
        Some(a) => {
            let cfg = SolveConfig { materialize: Materialize::None, ..base.clone() };
            let run = solve(a.spec()?, &a.data, &cfg, true)?;
            let same_layout = run.iterates.first().map(Vec::len) == reference.iterates.first().map(Vec::len);
            Some(EncodingRow {
                name: a.name.clone(),
                final_cost: run.result.final_cost,
                cost_difference: (run.result.final_cost - reference.result.final_cost).abs(),
                divergence: same_layout.then(|| iterate_divergence(&run, &reference)),
            })
        }
        None => None,
    };
    Ok(CompareReport { problem: problem.name.clone(), rows, against })
}
