//! Compile, bind and solve; the `solve` command.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use minopt::backend::State;
use minopt::frontend::ProblemSpec;
use minopt::io::{write_optd, DenseArray};
use minopt::solver::{plan, SolveConfig, SolveResult, TraceRow};
use minopt::{Precision, Real};

use crate::bind::{bind_state, compile, compile_file, load_data, unknown_arrays, DataMap};
use crate::error::{CliError, CliResult};
use crate::manifest::{ConfigOverrides, RunManifest};

/// A problem source together with its data.
#[derive(Clone, Debug)]
pub struct Problem {
    pub name: String,
    pub source: String,
    pub dims: BTreeMap<String, usize>,
    pub data: DataMap,
}

impl Problem {
    pub fn spec(&self) -> CliResult<ProblemSpec> {
        compile(&self.source, &self.dims, &self.data)
    }
}

#[derive(Clone, Debug)]
pub struct Run {
    pub result: SolveResult,
    pub unknowns: Vec<(String, DenseArray)>,
    /// `x` before the first iteration and after every iteration, when recorded.
    pub iterates: Vec<Vec<f64>>,
}

impl Run {
    pub fn x(&self) -> Vec<f64> {
        self.unknowns.iter().flat_map(|(_, a)| a.values.to_f64()).collect()
    }
}

/// Observer of each iteration: the trace row and the iterate it produced.
pub type Observer<'a> = dyn FnMut(&TraceRow, &[f64]) + 'a;

pub fn solve(spec: ProblemSpec, data: &DataMap, cfg: &SolveConfig, record: bool) -> CliResult<Run> {
    solve_observed(spec, data, cfg, record, None)
}

pub fn solve_observed(
    spec: ProblemSpec,
    data: &DataMap,
    cfg: &SolveConfig,
    record: bool,
    observer: Option<&mut Observer<'_>>,
) -> CliResult<Run> {
    match cfg.precision {
        Precision::F32 => solve_typed::<f32>(spec, data, cfg, record, observer),
        Precision::F64 => solve_typed::<f64>(spec, data, cfg, record, observer),
    }
}

fn solve_typed<T: Real>(
    spec: ProblemSpec,
    data: &DataMap,
    cfg: &SolveConfig,
    record: bool,
    mut observer: Option<&mut Observer<'_>>,
) -> CliResult<Run> {
    let plan = plan(spec, cfg, false)?;
    let mut st: State<T> = bind_state(&plan.spec, data)?;
    let to_f64 = |x: &[T]| x.iter().map(|v| Real::to_f64(*v)).collect::<Vec<f64>>();
    let mut iterates = Vec::new();
    if record {
        iterates.push(to_f64(&st.x));
    }
    let mut cb = |row: &TraceRow, st: &mut State<T>| {
        if record || observer.is_some() {
            let x = to_f64(&st.x);
            if let Some(o) = observer.as_mut() {
                o(row, &x);
            }
            if record {
                iterates.push(x);
            }
        }
        Ok(())
    };
    let result = plan.solve(&mut st, cfg, Some(&mut cb))?;
    Ok(Run { result, unknowns: unknown_arrays(&plan.spec, &st), iterates })
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub run: Run,
    pub config: SolveConfig,
    pub written: Vec<PathBuf>,
}

impl std::fmt::Display for SolveReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let r = &self.run.result;
        writeln!(
            f,
            "method={} precision={} materialize={}",
            self.config.method.name(),
            self.config.precision.name(),
            self.config.materialize.name()
        )?;
        writeln!(f, "iterations: {}", r.trace.len() - 1)?;
        writeln!(f, "termination: {}", r.termination.describe())?;
        writeln!(f, "initial cost: {:e}", r.initial_cost)?;
        write!(f, "final cost: {:e}", r.final_cost)?;
        if r.unconstrained > 0 {
            write!(f, "\nwarning: {} unknowns have no residuals", r.unconstrained)?;
        }
        for p in &self.written {
            write!(f, "\nwrote {}", p.display())?;
        }
        Ok(())
    }
}

/// Loads, solves and writes outputs. A solve that ends in a non-finite cost is
/// reported as a solver failure after its outputs are written.
pub fn cmd_solve(manifest: &Path, flags: &ConfigOverrides, trace: Option<&Path>) -> CliResult<SolveReport> {
    let m = RunManifest::load(manifest)?;
    let data = load_data(&m.bind)?;
    let spec = compile_file(&m.problem, &m.dims, &data)?;
    let config = m.config.merged(flags).apply(None)?;
    let run = solve(spec, &data, &config, false)?;
    let mut written = Vec::new();
    if let Some(dir) = &m.output.dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
        for (name, a) in &run.unknowns {
            let p = dir.join(format!("{name}.optd"));
            write_optd(a, &p)?;
            written.push(p);
        }
    }
    if let Some(t) = trace.map(Path::to_path_buf).or(m.output.trace.clone()) {
        std::fs::write(&t, run.result.trace_csv()).map_err(|e| CliError::usage(format!("cannot write {}: {e}", t.display())))?;
        written.push(t);
    }
    let report = SolveReport { run, config, written };
    if !report.run.result.succeeded() {
        return Err(CliError::Solver(format!("{report}")));
    }
    Ok(report)
}
