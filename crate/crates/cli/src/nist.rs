//! The StRD nonlinear regression problems as one-parameter-vertex graphs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use minopt::backend::GraphData;
use minopt::io::{read_nist, DenseArray, NistProblem};
use minopt::solver::{trace_csv, Method, SolveConfig, TraceRow};
use minopt::Precision;
use serde::Serialize;

use crate::bind::{Data, DataMap};
use crate::error::{CliError, CliResult};
use crate::run::{solve, Problem};

const PI: &str = "3.141592653589793";

/// Model of each supported dataset in terms of `b1..bk` and `x`.
pub fn model(name: &str) -> Option<&'static str> {
    Some(match name {
        "Misra1a" | "BoxBOD" => "b1*(1 - exp(-b2*x))",
        "Chwirut1" | "Chwirut2" => "exp(-b1*x)/(b2 + b3*x)",
        "Lanczos1" | "Lanczos2" | "Lanczos3" => "b1*exp(-b2*x) + b3*exp(-b4*x) + b5*exp(-b6*x)",
        "Gauss1" | "Gauss2" | "Gauss3" => {
            "b1*exp(-b2*x) + b3*exp(-pow(x - b4, 2)/pow(b5, 2)) + b6*exp(-pow(x - b7, 2)/pow(b8, 2))"
        }
        "DanWood" => "b1*exp(b2*log(x))",
        "Misra1b" => "b1*(1 - pow(1 + b2*x/2, -2))",
        "Kirby2" => "(b1 + b2*x + b3*pow(x, 2))/(1 + b4*x + b5*pow(x, 2))",
        "Hahn1" | "Thurber" => {
            "(b1 + b2*x + b3*pow(x, 2) + b4*pow(x, 3))/(1 + b5*x + b6*pow(x, 2) + b7*pow(x, 3))"
        }
        "MGH17" => "b1 + b2*exp(-x*b4) + b3*exp(-x*b5)",
        "Misra1c" => "b1*(1 - pow(1 + 2*b2*x, -0.5))",
        "Misra1d" => "b1*b2*x*pow(1 + b2*x, -1)",
        "Roszman1" => "b1 - b2*x - atan(b3/(x - b4))/PI",
        "ENSO" => {
            "b1 + b2*cos(2*PI*x/12) + b3*sin(2*PI*x/12) + b5*cos(2*PI*x/b4) + b6*sin(2*PI*x/b4) \
             + b8*cos(2*PI*x/b7) + b9*sin(2*PI*x/b7)"
        }
        "MGH09" => "b1*(pow(x, 2) + x*b2)/(pow(x, 2) + x*b3 + b4)",
        "Rat42" => "b1/(1 + exp(b2 - b3*x))",
        "MGH10" => "b1*exp(b2/(x + b3))",
        "Eckerle4" => "(b1/b2)*exp(-0.5*pow((x - b3)/b2, 2))",
        "Rat43" => "b1*exp(-log(1 + exp(b2 - b3*x))/b4)",
        "Bennett5" => "b1*exp(-log(b2 + x)/b3)",
        _ => return None,
    })
}

/// Rewrites model identifiers into accesses through the data graph.
fn substitute(model: &str) -> String {
    let mut out = String::new();
    let mut chars = model.chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_ascii_alphabetic() {
            let mut id = String::from(c);
            while let Some(&d) = chars.peek() {
                if !d.is_ascii_alphanumeric() {
                    break;
                }
                id.push(d);
                chars.next();
            }
            match id.as_str() {
                "x" => out.push_str("X(G.d)"),
                "PI" => out.push_str(PI),
                s if s.starts_with('b') && s[1..].parse::<usize>().is_ok() => {
                    let k: usize = s[1..].parse().unwrap();
                    out.push_str(&format!("B[{}](G.p)", k - 1));
                }
                s => out.push_str(s),
            }
        } else {
            out.push(c);
        }
    }
    out
}

pub fn source(p: &NistProblem) -> CliResult<String> {
    let m = model(&p.name).ok_or_else(|| CliError::usage(format!("no model for dataset {}", p.name)))?;
    Ok(format!(
        "# {name}: y = {m}\ndim P 1\ndim D {n}\nunknown B[P]:{k}\narray X[D]\narray Y[D]\ngraph G(p, d)\nenergy Y(G.d) - ({body})\n",
        name = p.name,
        n = p.y.len(),
        k = p.n_params(),
        body = substitute(m),
    ))
}

/// The problem from one of the two certified starting vectors (0 or 1).
pub fn problem(p: &NistProblem, start: usize) -> CliResult<Problem> {
    let n = p.y.len();
    let dense = |v: &[f64], c: usize, e: usize| Data::Dense(DenseArray::from_f64(vec![e], c, v.to_vec()).unwrap());
    let edges = GraphData::new(2, (0..n as u64).flat_map(|i| [0, i]).collect()).unwrap();
    let data = DataMap::from([
        ("B".into(), dense(&p.starts[start], p.n_params(), 1)),
        ("X".into(), dense(&p.x, 1, n)),
        ("Y".into(), dense(&p.y, 1, n)),
        ("G".into(), Data::Graph(edges)),
    ]);
    Ok(Problem { name: p.name.clone(), source: source(p)?, dims: BTreeMap::new(), data })
}

/// Solver settings of the suite: many nonlinear iterations, near-exact linear solves.
pub fn suite_config(method: Method, precision: Precision, k: usize) -> SolveConfig {
    SolveConfig {
        method,
        nonlinear_iters: 300,
        linear_iters: 10 * k,
        pcg_rel_tol: match precision {
            Precision::F64 => 1e-14,
            Precision::F32 => 1e-6,
        },
        cost_stop_tol: 1e-15,
        ..SolveConfig::for_precision(precision)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NistRun {
    pub problem: String,
    pub difficulty: &'static str,
    pub method: &'static str,
    pub precision: &'static str,
    pub start: usize,
    pub iterations: usize,
    pub final_cost: f64,
    pub certified_sse: f64,
    pub rel_error: f64,
    pub termination: String,
    pub wall_ms: f64,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl NistRun {
    pub fn reached(&self, tol: f64) -> bool {
        self.rel_error <= tol
    }
}

#[derive(Clone, Debug, Default)]
pub struct NistReport {
    pub runs: Vec<NistRun>,
    /// Datasets that could not be loaded or compiled.
    pub skipped: Vec<(String, String)>,
}

impl NistReport {
    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.runs {
            w.serialize(r).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).unwrap()
    }

    pub fn find(&self, problem: &str, method: &str, precision: &str, start: usize) -> Option<&NistRun> {
        self.runs
            .iter()
            .find(|r| r.problem == problem && r.method == method && r.precision == precision && r.start == start)
    }
}

pub struct Variant {
    pub method: Method,
    pub precision: Precision,
    /// 1 or 2.
    pub start: usize,
}

pub fn all_variants() -> Vec<Variant> {
    let mut v = Vec::new();
    for method in [Method::GaussNewton, Method::LevenbergMarquardt] {
        for precision in [Precision::F32, Precision::F64] {
            for start in [1, 2] {
                v.push(Variant { method, precision, start });
            }
        }
    }
    v
}

pub fn run_one(p: &NistProblem, v: &Variant) -> CliResult<NistRun> {
    let prob = problem(p, v.start - 1)?;
    let cfg = suite_config(v.method, v.precision, p.n_params());
    let t = Instant::now();
    let run = solve(prob.spec()?, &prob.data, &cfg, false)?;
    let r = run.result;
    let rel_error = if r.final_cost.is_finite() {
        (r.final_cost - p.certified_sse).abs() / p.certified_sse
    } else {
        f64::INFINITY
    };
    Ok(NistRun {
        problem: p.name.clone(),
        difficulty: p.difficulty.name(),
        method: v.method.name(),
        precision: v.precision.name(),
        start: v.start,
        iterations: r.trace.len() - 1,
        final_cost: r.final_cost,
        certified_sse: p.certified_sse,
        rel_error,
        termination: r.termination.describe().to_string(),
        wall_ms: t.elapsed().as_secs_f64() * 1e3,
        trace: r.trace,
    })
}

/// `.dat` files of `dir`, sorted by name.
pub fn dataset_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut v: Vec<PathBuf> =
        rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|e| e == "dat")).collect();
    v.sort();
    Ok(v)
}

/// Runs every dataset of `dir` under every variant. Datasets that fail to load
/// and runs that error are recorded; the suite continues.
pub fn cmd_nist(dir: &Path, variants: &[Variant], trace_dir: Option<&Path>) -> CliResult<NistReport> {
    let mut report = NistReport::default();
    for f in dataset_files(dir)? {
        let name = f.file_stem().unwrap().to_string_lossy().to_string();
        let p = match read_nist(&f) {
            Ok(p) if model(&p.name).is_some() => p,
            Ok(_) => {
                report.skipped.push((name, "no model".into()));
                continue;
            }
            Err(e) => {
                report.skipped.push((name, e.to_string()));
                continue;
            }
        };
        for v in variants {
            match run_one(&p, v) {
                Ok(r) => report.runs.push(r),
                Err(e) => report.skipped.push((
                    format!("{} {} {} start{}", p.name, v.method.name(), v.precision.name(), v.start),
                    e.to_string(),
                )),
            }
        }
    }
    if let Some(d) = trace_dir {
        std::fs::create_dir_all(d).map_err(|e| CliError::usage(format!("cannot create {}: {e}", d.display())))?;
        for r in &report.runs {
            let s = trace_csv(&r.trace);
            let p = d.join(format!("{}_{}_{}_start{}.csv", r.problem, r.method, r.precision, r.start));
            std::fs::write(&p, s).map_err(|e| CliError::usage(format!("cannot write {}: {e}", p.display())))?;
        }
    }
    Ok(report)
}
