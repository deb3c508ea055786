//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). An optional argument selects
//! criteria by number, e.g. `cargo test --test acceptance -- 3`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use common::gen::*;
use minopt::autodiff::{derivative, DerivativeCache};
use minopt::backend::{exec_grid, exec_grid_strict, schedule, ExecMode, Layout, SharedMut, Site, State};
use minopt::frontend::{ProblemSpec, TemplateDomain};
use minopt::ir::{eval_expr, Loc, Offset};
use minopt::simplify::{canonicalize, eval_conditioned, factor_horner, lower_conditions};
use minopt::solver::{plan, CompiledPlan, Materialize, Method, SolveConfig};
use minopt::transform::build_solver_exprs;
use minopt_cli::bind::{bind_state, compile, Data, DataMap};
use minopt_cli::compare::compare;
use minopt_cli::gallery::{self, Instance};
use minopt_cli::nist;
use minopt_cli::run::{solve, Problem, Run};
use nalgebra::{DMatrix, DVector};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const SEQ: ExecMode = ExecMode::Sequential;

fn err(e: impl Display) -> String {
    e.to_string()
}

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, max_global_rejects: 100_000, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn bound(inst: &Instance) -> Result<(ProblemSpec, State<f64>), String> {
    let spec = inst.problem.spec().map_err(err)?;
    let st = bind_state(&spec, &inst.problem.data).map_err(err)?;
    Ok((spec, st))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn jt(j: &[Vec<f64>], v: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (row, &vi) in j.iter().zip(v) {
        for (o, &a) in out.iter_mut().zip(row) {
            *o += a * vi;
        }
    }
    out
}

/// 1. Symbolic partials against central differences.
fn derivative_oracle() -> Outcome {
    let spec = problem();
    let lay = layout(&spec);
    let site = Site::Grid { shape: spec.domain_shape(0), coords: [1, 1, 0] };
    let shape = spec.domain_shape(0);
    let worst = Cell::new(0.0f64);
    let partials = Cell::new(0usize);
    let exprs = Cell::new(0usize);
    let mut r = runner(1000);
    let result = r.run(&(smooth(), 0u64..10_000), |(t, seed)| {
        let mut ar = spec.arena.clone();
        let raw = build_raw(&mut ar, &t);
        let e = canonicalize(&mut ar, raw);
        let mut st = random_state(&spec, Flavor::General, seed);
        let f0 = eval_expr(&ar, e, &env(st.inputs(&lay, &[]), site)).unwrap();
        proptest::prop_assume!(f0.is_finite() && f0.abs() < 1e4);
        exprs.set(exprs.get() + 1);
        let mut cache = DerivativeCache::new();
        let read: Vec<(i8, i8)> = ar
            .accesses(e)
            .into_iter()
            .filter_map(|a| match (a.source, a.loc) {
                (minopt::ir::Source::Unknown(_), Loc::Offset(o)) => Some((o.0[0] as i8, o.0[1] as i8)),
                _ => None,
            })
            .collect();
        for i in -1i8..=1 {
            for j in (-1i8..=1).filter(|&j| read.contains(&(i, j))) {
                let var = ar.access(access(3, i, j));
                let d = derivative(&mut ar, &[], e, var, &mut cache);
                let sym = eval_expr(&ar, d, &env(st.inputs(&lay, &[]), site)).unwrap();
                let idx = (1 + i as i64) as usize + shape[0] * (1 + j as i64) as usize;
                let x0 = st.x[idx];
                let h = 1e-6;
                st.x[idx] = x0 + h;
                let fp = eval_expr(&ar, e, &env(st.inputs(&lay, &[]), site)).unwrap();
                st.x[idx] = x0 - h;
                let fm = eval_expr(&ar, e, &env(st.inputs(&lay, &[]), site)).unwrap();
                st.x[idx] = x0;
                let fd = (fp - fm) / (2.0 * h);
                let rel = (sym - fd).abs() / sym.abs().max(1.0);
                worst.set(worst.get().max(rel));
                partials.set(partials.get() + 1);
                proptest::prop_assert!(rel <= 1e-5, "d/dX({i},{j}): symbolic {sym}, difference {fd}");
            }
        }
        Ok(())
    });
    result.map_err(err)?;
    Ok(format!(
        "{} expressions, {} partials, worst relative error {:.1e}",
        exprs.get(),
        partials.get(),
        worst.get()
    ))
}

/// 2. Matrix-free routines against products with the materialized J.
fn matrix_free_vs_dense() -> Outcome {
    let cases = [
        gallery::laplacian2(),
        gallery::laplacian_grid(8, 8, 1),
        gallery::poisson(8, 2),
        gallery::arap_warp(16),
        gallery::arap_mesh(),
    ];
    let mut worst = 0.0f64;
    let mut names = Vec::new();
    for inst in &cases {
        let (spec, base) = bound(inst)?;
        let p = plan(spec.clone(), &SolveConfig::default(), true).map_err(err)?;
        let mut sym_spec = spec.clone();
        let exprs = build_solver_exprs(&mut sym_spec);
        let n = p.n();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for k in 0..20 {
            let mut st = base.clone();
            for v in st.x.iter_mut() {
                *v += rng.gen_range(-0.5..0.5);
            }
            p.recompute_computed(&mut st, SEQ, false).map_err(err)?;
            let j = p.jacobian(&st, SEQ).map_err(err)?.to_dense();
            let f = p.residuals(&st, SEQ).map_err(err)?;
            let (interp_j, interp_f) = common::dense_j(&sym_spec, &exprs, &st);
            let route = common::rel_linf(&j.concat(), &interp_j.concat()).max(common::rel_linf(&f, &interp_f));

            let want_b: Vec<f64> = jt(&j, &f, n).iter().map(|v| -2.0 * v).collect();
            let want_m: Vec<f64> = (0..n).map(|c| 2.0 * j.iter().map(|r| r[c] * r[c]).sum::<f64>()).collect();
            let dir = random_vec(&mut rng, n, 1.0);
            let jp: Vec<f64> = j.iter().map(|r| r.iter().zip(&dir).map(|(a, b)| a * b).sum()).collect();
            let want_h: Vec<f64> = jt(&j, &jp, n).iter().map(|v| 2.0 * v).collect();

            let (mut b, mut m, mut h) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            p.jtf(&st, SEQ, &mut b, &mut m).map_err(err)?;
            p.apply_jtj(&st, &dir, SEQ, &mut h).map_err(err)?;
            let errs = [
                ("evalJTF", common::rel_linf(&b, &want_b)),
                ("precond", common::rel_linf(&m, &want_m)),
                ("applyJTJ", common::rel_linf(&h, &want_h)),
                ("J vs interpreter", route),
            ];
            for (what, e) in errs {
                worst = worst.max(e);
                if e > 1e-10 {
                    return Err(format!("{} state {k}: {what} relative error {e:e}", inst.problem.name));
                }
            }
        }
        names.push(inst.problem.name.clone());
    }
    Ok(format!("{} at 20 states each, worst relative error {worst:.1e}", names.join(", ")))
}

/// 3. One Gauss-Newton iteration on Poisson 64×64 against a dense solve.
fn poisson_exactness() -> Outcome {
    let inst = gallery::poisson(64, 3);
    let cfg = &inst.config;
    if cfg.method != Method::GaussNewton || cfg.nonlinear_iters != 1 || cfg.pcg_rel_tol != 1e-12 {
        return Err("packaged Poisson configuration is not one exact GN iteration".into());
    }
    let run = solve(inst.problem.spec().map_err(err)?, &inst.problem.data, cfg, false).map_err(err)?;
    let pcg_iters = run.result.trace[1].pcg_iters;
    if pcg_iters > 2000 {
        return Err(format!("{pcg_iters} PCG iterations"));
    }
    let x = run.x();

    let get = |name: &str| match &inst.problem.data[name] {
        Data::Dense(a) => a.values.to_f64(),
        _ => unreachable!(),
    };
    let (x0, t, mask) = (get("X"), get("T"), get("M"));
    let n = 64usize;
    let free: Vec<usize> = (0..n * n).filter(|&p| mask[p] == 0.0).collect();
    let mut col = vec![usize::MAX; n * n];
    for (k, &p) in free.iter().enumerate() {
        col[p] = k;
    }
    let nf = free.len();
    let mut a = DMatrix::<f64>::zeros(nf, nf);
    let mut rhs = DVector::<f64>::zeros(nf);
    for j in 0..n as i64 {
        for i in 0..n as i64 {
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (qi, qj) = (i + di, j + dj);
                if qi < 0 || qj < 0 || qi >= n as i64 || qj >= n as i64 {
                    continue;
                }
                let (p, q) = ((i + n as i64 * j) as usize, (qi + n as i64 * qj) as usize);
                // r = x_p - x_q - (t_p - t_q); fixed pixels move into the constant.
                let mut c = -(t[p] - t[q]);
                let mut row: Vec<(usize, f64)> = Vec::new();
                for (v, s) in [(p, 1.0), (q, -1.0)] {
                    if col[v] == usize::MAX {
                        c += s * x0[v];
                    } else {
                        row.push((col[v], s));
                    }
                }
                for &(r, sr) in &row {
                    rhs[r] -= sr * c;
                    for &(s, ss) in &row {
                        a[(r, s)] += sr * ss;
                    }
                }
            }
        }
    }
    let y = a.cholesky().ok_or("normal matrix is not positive definite")?.solve(&rhs);
    let rms = (free.iter().enumerate().map(|(k, &p)| (x[p] - y[k]).powi(2)).sum::<f64>() / nf as f64).sqrt();
    let fixed_moved = (0..n * n).filter(|&p| mask[p] != 0.0 && x[p].to_bits() != x0[p].to_bits()).count();
    if fixed_moved > 0 {
        return Err(format!("{fixed_moved} excluded pixels moved"));
    }
    if rms > 1e-4 {
        return Err(format!("RMS {rms:e} against the dense solve"));
    }
    Ok(format!("{nf} free pixels, {pcg_iters} PCG iterations, RMS {rms:.1e}"))
}

fn run_mode(inst: &Instance, problem: &Problem, m: Materialize) -> Result<Run, String> {
    let cfg = SolveConfig { materialize: m, ..inst.config.clone() };
    solve(problem.spec().map_err(err)?, &problem.data, &cfg, true).map_err(err)
}

fn iterate_gap(a: &Run, b: &Run) -> f64 {
    if a.iterates.len() != b.iterates.len() {
        return f64::INFINITY;
    }
    a.iterates.iter().zip(&b.iterates).map(|(x, y)| common::rel_linf(x, y)).fold(0.0, f64::max)
}

/// 4. Every operator mode walks the same iterates.
fn mode_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for inst in gallery::packaged() {
        let free = run_mode(&inst, &inst.problem, Materialize::None)?;
        let mut gaps = vec![];
        for m in [Materialize::J, Materialize::JtJ] {
            gaps.push((m.name().to_string(), iterate_gap(&run_mode(&inst, &inst.problem, m)?, &free)));
        }
        let hybrid = inst.cached_variant.as_deref().and_then(gallery::find).map(|h| h.problem);
        if let Some(h) = &hybrid {
            gaps.push((h.name.clone(), iterate_gap(&run_mode(&inst, h, Materialize::None)?, &free)));
        }
        for (what, g) in &gaps {
            worst = worst.max(*g);
            if *g > 1e-6 {
                return Err(format!("{} {what}: iterate divergence {g:e}", inst.problem.name));
            }
        }
        let report = compare(&inst.problem, &inst.config, hybrid.as_ref(), None, 1).map_err(err)?;
        if report.rows.iter().any(|r| !(r.us_per_linear_iter.is_finite() && r.us_per_linear_iter > 0.0)) {
            return Err(format!("{}: missing timings\n{report}", inst.problem.name));
        }
        let t: Vec<String> = report.rows.iter().map(|r| format!("{} {:.1}us", r.mode, r.us_per_linear_iter)).collect();
        lines.push(format!("    {}: {}", inst.problem.name, t.join(", ")));
    }
    Ok(format!("{} problems, worst iterate divergence {worst:.1e}\n{}", lines.len(), lines.join("\n")))
}

/// 5. Accepted LM steps decrease the cost; rejected ones leave x alone.
fn lm_contract() -> Outcome {
    let mut notes = Vec::new();
    for inst in [gallery::arap_warp(16), gallery::arap_mesh()] {
        let mut rejects = 0;
        for (label, start_radius, jitter) in [("default", 1e4, 0.0), ("jittered", 1e2, 0.3)] {
            let mut problem = inst.problem.clone();
            if jitter > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(9);
                if let Some(Data::Dense(a)) = problem.data.get_mut("Angle") {
                    let v: Vec<f64> = a.values.to_f64().iter().map(|x| x + rng.gen_range(-jitter..jitter)).collect();
                    *a = minopt::io::DenseArray::from_f64(a.extents.clone(), a.channels, v).map_err(err)?;
                }
            }
            let cfg = SolveConfig { nonlinear_iters: 30, initial_radius: start_radius, ..inst.config.clone() };
            let run = solve(problem.spec().map_err(err)?, &problem.data, &cfg, true).map_err(err)?;
            let mut best = run.result.trace[0].cost;
            for (k, row) in run.result.trace.iter().enumerate().skip(1) {
                if row.accepted {
                    if !(row.cost < best) {
                        return Err(format!("{} {label}: accepted step {k} went from {best:e} to {:e}", inst.problem.name, row.cost));
                    }
                    best = row.cost;
                } else {
                    rejects += 1;
                    let same = run.iterates[k].iter().zip(&run.iterates[k - 1]).all(|(a, b)| a.to_bits() == b.to_bits());
                    if !same {
                        return Err(format!("{} {label}: rejected step {k} moved x", inst.problem.name));
                    }
                }
            }
        }
        let lm = solve(inst.problem.spec().map_err(err)?, &inst.problem.data, &SolveConfig { nonlinear_iters: 30, ..inst.config.clone() }, false)
            .map_err(err)?;
        let gn_cfg = SolveConfig { method: Method::GaussNewton, nonlinear_iters: 30, ..inst.config.clone() };
        let gn = solve(inst.problem.spec().map_err(err)?, &inst.problem.data, &gn_cfg, false).map_err(err)?;
        let (a, b) = (lm.result.final_cost, gn.result.final_cost);
        let gap = (a - b).abs() / a.max(b);
        if !(gap <= 0.01) {
            return Err(format!("{}: LM {a:e} vs GN {b:e}", inst.problem.name));
        }
        notes.push(format!("{}: {rejects} rejected steps, LM {a:.6e} vs GN {b:.6e}", inst.problem.name));
    }
    Ok(notes.join("; "))
}

/// 6. The NIST StRD problems.
fn nist_suite() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/nist");
    let report = nist::cmd_nist(&dir, &nist::all_variants(), None).map_err(err)?;
    let f64lm = |name: &str, start: usize| report.find(name, "lm", "f64", start);
    let mut problems: Vec<(&str, &str)> = report.runs.iter().map(|r| (r.problem.as_str(), r.difficulty)).collect();
    problems.dedup();

    let mut lower_fail = Vec::new();
    let (mut hard, mut hard_ok) = (0, 0);
    let mut failures = Vec::new();
    for &(name, difficulty) in &problems {
        if difficulty == "lower" {
            if !f64lm(name, 1).is_some_and(|r| r.reached(1e-6)) {
                lower_fail.push(name);
                failures.push(name);
            }
        } else {
            hard += 1;
            if (1..=2).any(|s| f64lm(name, s).is_some_and(|r| r.reached(1e-4))) {
                hard_ok += 1;
            } else {
                failures.push(name);
            }
        }
    }

    let log_dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("nist_failures");
    let _ = std::fs::remove_dir_all(&log_dir);
    let mut log = Vec::new();
    for r in report.runs.iter().filter(|r| failures.contains(&r.problem.as_str())) {
        std::fs::create_dir_all(&log_dir).map_err(err)?;
        let p = log_dir.join(format!("{}_{}_{}_start{}.csv", r.problem, r.method, r.precision, r.start));
        std::fs::write(&p, minopt::solver::trace_csv(&r.trace)).map_err(err)?;
        log.push(format!(
            "    {} {} {} start{}: cost {:e} vs {:e}, rel {:.1e}, {}",
            r.problem, r.method, r.precision, r.start, r.final_cost, r.certified_sse, r.rel_error, r.termination
        ));
    }
    let mut gap = Vec::new();
    for (m, p) in [("gn", "f32"), ("gn", "f64"), ("lm", "f32"), ("lm", "f64")] {
        let ok = problems
            .iter()
            .filter(|(n, _)| (1..=2).any(|s| report.find(n, m, p, s).is_some_and(|r| r.reached(1e-4))))
            .count();
        gap.push(format!("{m}/{p} {ok}/{}", problems.len()));
    }
    let wall: f64 = report.runs.iter().map(|r| r.wall_ms).sum();
    let summary = format!(
        "{} problems ({} skipped), lower {}/{} at 1e-6, average/higher {hard_ok}/{hard} at 1e-4; reached 1e-4 by variant: {}; {:.1} s",
        problems.len(),
        report.skipped.iter().filter(|(_, why)| !why.is_empty()).count(),
        problems.iter().filter(|(_, d)| *d == "lower").count() - lower_fail.len(),
        problems.iter().filter(|(_, d)| *d == "lower").count(),
        gap.join(", "),
        wall / 1e3
    );
    let detail = if log.is_empty() {
        String::new()
    } else {
        format!("\n  failures (traces in {}):\n{}", log_dir.display(), log.join("\n"))
    };
    let ok = lower_fail.is_empty() && hard_ok * 5 >= hard * 4;
    if ok {
        Ok(summary + &detail)
    } else {
        Err(summary + &detail)
    }
}

/// 7. Rewrites and scheduled kernels against the raw interpreter.
fn simplifier_semantics() -> Outcome {
    let spec = problem();
    let lay = layout(&spec);
    let bitwise = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
    let kernel = |prog: &minopt::backend::KernelProgram, inputs: &minopt::backend::Inputs<'_, f64>, k: usize| {
        let n = spec.domain_len(0);
        let mut out = vec![0.0; n * k];
        let shared = SharedMut::new(&mut out);
        exec_grid(prog, inputs, spec.domain_shape(0), SEQ, &|e, o: &[f64]| {
            for (c, &v) in o.iter().enumerate() {
                // SAFETY: element `e` owns its k outputs.
                unsafe { shared.write(e * k + c, v) };
            }
        })
        .unwrap();
        out
    };

    // Integer data: every stage is exact, so compare each with the raw tree.
    let mut r = runner(1000);
    r.run(&(tree(Flavor::Exact), 0u64..1000), |(t, seed)| {
        let mut ar = spec.arena.clone();
        let raw = build_raw(&mut ar, &t);
        let canon = canonicalize(&mut ar, raw);
        let factored = factor_horner(&mut ar, canon);
        let cir = lower_conditions(&mut ar, &[factored]);
        let prog = schedule(&ar, &cir).unwrap();
        proptest::prop_assert!(prog.check_guards().is_ok());
        let st = random_state(&spec, Flavor::Exact, seed);
        let inputs = st.inputs(&lay, &[]);
        let k = kernel(&prog, &inputs, 1);
        for (e, s) in sites(&spec).into_iter().enumerate() {
            let want = eval_expr(&ar, raw, &env(inputs, s)).unwrap();
            if !want.is_finite() {
                continue;
            }
            let stages = [
                ("canonicalize", eval_expr(&ar, canon, &env(inputs, s)).unwrap()),
                ("factor_horner", eval_expr(&ar, factored, &env(inputs, s)).unwrap()),
                ("lower_conditions", eval_conditioned(&ar, &cir, &env(inputs, s)).unwrap()[0]),
                ("schedule", k[e]),
            ];
            for (what, got) in stages {
                proptest::prop_assert!(same(want, got), "{what} at {e}: {want} vs {got}");
            }
        }
        Ok(())
    })
    .map_err(err)?;

    // Real data: the kernel reproduces the conditioned interpreter bit for bit.
    let mut r = runner(1000);
    r.run(&(proptest::collection::vec(tree(Flavor::General), 1..4), 0u64..1000), |(ts, seed)| {
        let mut ar = spec.arena.clone();
        let roots: Vec<_> = ts
            .iter()
            .map(|t| {
                let raw = build_raw(&mut ar, t);
                let c = canonicalize(&mut ar, raw);
                factor_horner(&mut ar, c)
            })
            .collect();
        let cir = lower_conditions(&mut ar, &roots);
        let prog = schedule(&ar, &cir).unwrap();
        let st = random_state(&spec, Flavor::General, seed);
        let inputs = st.inputs(&lay, &[]);
        let k = roots.len();
        let out = kernel(&prog, &inputs, k);
        for (e, s) in sites(&spec).into_iter().enumerate() {
            let want = eval_conditioned(&ar, &cir, &env(inputs, s)).unwrap();
            for c in 0..k {
                proptest::prop_assert!(bitwise(want[c], out[e * k + c]), "element {e} output {c}");
            }
        }
        Ok(())
    })
    .map_err(err)?;

    // Guarded reads never leave the domain.
    let mut r = runner(1000);
    r.run(&(tree(Flavor::General), 0u64..1000, proptest::bool::ANY), |(t, seed, global)| {
        let mut ar = spec.arena.clone();
        let e = if global {
            let body = build_raw(&mut ar, &t);
            let mut offs = Vec::new();
            read_offsets(&t, &mut offs);
            let mut factors: Vec<_> = offs.into_iter().filter(|o| !o.is_zero()).map(|o| ar.in_bounds(o)).collect();
            factors.push(body);
            ar.mul(&factors)
        } else {
            build_raw(&mut ar, &protect_locally(&t))
        };
        let canon = canonicalize(&mut ar, e);
        let cir = lower_conditions(&mut ar, &[canon]);
        let st = random_state(&spec, Flavor::General, seed);
        let inputs = st.inputs(&lay, &[]);
        for s in sites(&spec) {
            proptest::prop_assert!(eval_conditioned(&ar, &cir, &Trapping(env(inputs, s))).is_ok());
        }
        let prog = schedule(&ar, &cir).unwrap();
        let strict = exec_grid_strict(&prog, &inputs, spec.domain_shape(0), &|_, _| {});
        proptest::prop_assert!(strict.is_ok(), "kernel read out of bounds");
        Ok(())
    })
    .map_err(err)?;
    Ok("1000 integer-data chains, 1000 multi-output kernels, 1000 trapping-sampler runs".into())
}

const REACH: &str = "
dim W 7
dim H 5
unknown X[W,H]:2
array A[W,H]
param s
energy X[0](2,0)*A(-1,1) - sin(X[1](0,-2)) + s*X[0](0,0)
energy select(less(A(0,0), 0.5), X[1](1,1) - X[0](-2,0), atan(X[0](0,1)))
";

const PAD: usize = 2;

/// Offsets read by each energy statement of `source`, in statement order.
fn energy_offsets(source: &str, data: &DataMap) -> Result<Vec<Vec<Offset>>, String> {
    let lines: Vec<&str> = source.lines().collect();
    let energies: Vec<usize> = (0..lines.len()).filter(|&i| lines[i].trim_start().starts_with("energy ")).collect();
    let mut out = Vec::new();
    for &keep in &energies {
        let src: String = lines
            .iter()
            .enumerate()
            .filter(|(i, _)| *i == keep || !energies.contains(i))
            .map(|(_, l)| format!("{l}\n"))
            .collect();
        let spec = compile(&src, &BTreeMap::new(), data).map_err(err)?;
        let mut offs = vec![Offset::ZERO];
        for t in &spec.templates {
            for a in spec.arena.accesses(t.expr) {
                if let Loc::Offset(o) = a.loc {
                    offs.push(o);
                }
            }
        }
        offs.sort_by_key(|o| o.0);
        offs.dedup();
        out.push(offs);
    }
    Ok(out)
}

/// The problem on a domain grown by `PAD` on every side, filled with garbage
/// outside the original, with every energy zeroed unless all its reads land
/// inside the original domain.
fn padded_problem(p: &Problem, w: usize, h: usize, rng: &mut ChaCha8Rng) -> Result<Problem, String> {
    let offsets = energy_offsets(&p.source, &p.data)?;
    let (pw, ph) = (w + 2 * PAD, h + 2 * PAD);
    let mut source = String::new();
    let mut k = 0;
    let mut declared = false;
    for line in p.source.lines() {
        let t = line.trim_start();
        let body = ["energy ", "computed ", "exclude "].iter().any(|k| t.starts_with(k));
        if body && !declared {
            source.push_str("array V[W,H]\nexclude not(eq(V(0,0), 1))\n");
            declared = true;
        }
        if let Some(e) = t.strip_prefix("energy ") {
            let conds: Vec<String> =
                offsets[k].iter().map(|o| format!("eq(V({},{}), 1)", o.0[0], o.0[1])).collect();
            let cond = if conds.len() == 1 { conds[0].clone() } else { format!("and({})", conds.join(", ")) };
            source.push_str(&format!("energy select({cond}, {e}, 0)\n"));
            k += 1;
        } else {
            source.push_str(line);
            source.push('\n');
        }
    }
    let mut data = DataMap::new();
    for (name, d) in &p.data {
        let d = match d {
            Data::Dense(a) if a.extents == [w, h] => {
                let v = a.values.to_f64();
                let c = a.channels;
                let mut out = random_vec(rng, pw * ph * c, 50.0);
                for j in 0..h {
                    for i in 0..w {
                        let (e, pe) = (i + w * j, (i + PAD) + pw * (j + PAD));
                        out[pe * c..pe * c + c].copy_from_slice(&v[e * c..e * c + c]);
                    }
                }
                Data::Dense(minopt::io::DenseArray::from_f64(vec![pw, ph], c, out).map_err(err)?)
            }
            other => other.clone(),
        };
        data.insert(name.clone(), d);
    }
    let mut valid = vec![0.0; pw * ph];
    for j in 0..h {
        for i in 0..w {
            valid[(i + PAD) + pw * (j + PAD)] = 1.0;
        }
    }
    data.insert("V".into(), Data::Dense(minopt::io::DenseArray::from_f64(vec![pw, ph], 1, valid).map_err(err)?));
    Ok(Problem { name: format!("{}_padded", p.name), source, dims: BTreeMap::new(), data })
}

/// Index of every original unknown entry in the padded state.
fn embedding(orig: &CompiledPlan, padded: &CompiledPlan, w: usize, h: usize) -> Vec<usize> {
    let (lo, lp) = (Layout::new(&orig.spec), Layout::new(&padded.spec));
    let pw = w + 2 * PAD;
    let mut map = vec![0; orig.n()];
    for (fo, fp) in lo.unknowns.iter().zip(&lp.unknowns) {
        let c = fo.channels;
        for j in 0..h {
            for i in 0..w {
                let (e, pe) = (i + w * j, (i + PAD) + pw * (j + PAD));
                for k in 0..c {
                    map[fo.base + e * c + k] = fp.base + pe * c + k;
                }
            }
        }
    }
    map
}

/// 8. Out-of-bounds elements contribute nothing.
fn boundary_default() -> Outcome {
    let reach = {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = DataMap::from([
            ("A".into(), Data::Dense(minopt::io::DenseArray::from_f64(vec![7, 5], 1, random_vec(&mut rng, 35, 1.0)).unwrap())),
            ("s".into(), Data::Param(0.7)),
        ]);
        Problem { name: "reach".into(), source: REACH.into(), dims: BTreeMap::new(), data }
    };
    let problems = vec![
        reach,
        gallery::laplacian_grid(8, 8, 1).problem,
        gallery::poisson(8, 2).problem,
        gallery::arap_warp(16).problem,
        gallery::irls_denoise(16, 5).problem,
    ];
    let mut worst = 0.0f64;
    let mut templates = 0;
    let cfg = SolveConfig::default();
    for p in &problems {
        let spec = p.spec().map_err(err)?;
        let [w, h] = spec.domain_extents(0)[..] else { return Err(format!("{}: not a 2-D grid", p.name)) };
        templates += spec.templates.iter().filter(|t| matches!(t.domain, TemplateDomain::Stencil(_))).count();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pp = padded_problem(p, w, h, &mut rng)?;
        let orig = plan(spec, &cfg, false).map_err(err)?;
        let padded = plan(pp.spec().map_err(|e| format!("{}: {e}\n{}", pp.name, pp.source))?, &cfg, false).map_err(err)?;
        let map = embedding(&orig, &padded, w, h);
        let inside: Vec<bool> = {
            let mut v = vec![false; padded.n()];
            map.iter().for_each(|&i| v[i] = true);
            v
        };
        for trial in 0..5 {
            let mut so: State<f64> = bind_state(&orig.spec, &p.data).map_err(err)?;
            let mut sp: State<f64> = bind_state(&padded.spec, &pp.data).map_err(err)?;
            for v in so.x.iter_mut() {
                *v += rng.gen_range(-0.5..0.5);
            }
            for (i, v) in sp.x.iter_mut().enumerate() {
                if !inside[i] {
                    *v = rng.gen_range(-50.0..50.0);
                }
            }
            for (k, &i) in map.iter().enumerate() {
                sp.x[i] = so.x[k];
            }
            orig.recompute_computed(&mut so, SEQ, false).map_err(err)?;
            padded.recompute_computed(&mut sp, SEQ, false).map_err(err)?;
            let (co, _) = orig.cost(&so, SEQ).map_err(err)?;
            let (cp, _) = padded.cost(&sp, SEQ).map_err(err)?;
            let dirs = random_vec(&mut rng, orig.n(), 1.0);
            let mut dirp = random_vec(&mut rng, padded.n(), 50.0);
            for (k, &i) in map.iter().enumerate() {
                dirp[i] = dirs[k];
            }
            let (no, np) = (orig.n(), padded.n());
            let (mut bo, mut mo, mut ho) = (vec![0.0; no], vec![0.0; no], vec![0.0; no]);
            let (mut bp, mut mp, mut hp) = (vec![0.0; np], vec![0.0; np], vec![0.0; np]);
            orig.jtf(&so, SEQ, &mut bo, &mut mo).map_err(err)?;
            padded.jtf(&sp, SEQ, &mut bp, &mut mp).map_err(err)?;
            orig.apply_jtj(&so, &dirs, SEQ, &mut ho).map_err(err)?;
            padded.apply_jtj(&sp, &dirp, SEQ, &mut hp).map_err(err)?;
            let gather = |v: &[f64]| map.iter().map(|&i| v[i]).collect::<Vec<f64>>();
            let leaked = (0..np).filter(|&i| !inside[i] && (bp[i] != 0.0 || mp[i] != 0.0 || hp[i] != 0.0)).count();
            if leaked > 0 {
                return Err(format!("{} trial {trial}: {leaked} padding entries are nonzero", p.name));
            }
            let errs = [
                ("cost", (co - cp).abs() / co.abs().max(1e-300)),
                ("JᵀF", common::rel_linf(&gather(&bp), &bo)),
                ("diag", common::rel_linf(&gather(&mp), &mo)),
                ("JᵀJp", common::rel_linf(&gather(&hp), &ho)),
            ];
            for (what, e) in errs {
                worst = worst.max(e);
                if !(e <= 1e-12) {
                    return Err(format!("{} trial {trial}: {what} differs by {e:e}", p.name));
                }
            }
        }
    }
    Ok(format!("{templates} stencil templates over {} problems, worst relative difference {worst:.1e}", problems.len()))
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn run_cli(manifest: &Path, threads: &str, extra: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_minopt"))
        .env("MINOPT_THREADS", threads)
        .arg("solve")
        .arg(manifest)
        .args(extra)
        .output()
        .map_err(err)?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let dir = manifest.parent().unwrap().join("out");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir).map_err(err)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    files.sort();
    let mut bytes = Vec::new();
    for f in files.iter().filter(|f| f.extension().is_some_and(|e| e == "optd")) {
        bytes.extend(std::fs::read(f).map_err(err)?);
    }
    Ok(bytes)
}

/// 9. Reproducibility across runs, thread counts and execution modes.
fn determinism() -> Outcome {
    let par = |inst: &Instance| SolveConfig { parallel: true, ..inst.config.clone() };
    let grids = [gallery::poisson(64, 3), gallery::laplacian_grid(100, 100, 8), gallery::arap_warp(16), gallery::irls_denoise(16, 5)];
    for inst in &grids {
        let spec = inst.problem.spec().map_err(err)?;
        let a = solve(spec.clone(), &inst.problem.data, &inst.config, false).map_err(err)?;
        let b = solve(spec.clone(), &inst.problem.data, &inst.config, false).map_err(err)?;
        let c = solve(spec, &inst.problem.data, &par(inst), false).map_err(err)?;
        if bits(&a.x()) != bits(&b.x()) {
            return Err(format!("{}: two sequential runs differ", inst.problem.name));
        }
        if bits(&a.x()) != bits(&c.x()) || a.result.final_cost.to_bits() != c.result.final_cost.to_bits() {
            return Err(format!("{}: parallel grid run differs from sequential", inst.problem.name));
        }
    }
    let mut graph_gap = 0.0f64;
    for inst in [gallery::arap_mesh(), gallery::robust_mesh(4), gallery::laplacian_graph(8, 8, 1)] {
        let spec = inst.problem.spec().map_err(err)?;
        let a = solve(spec.clone(), &inst.problem.data, &inst.config, false).map_err(err)?;
        let b = solve(spec.clone(), &inst.problem.data, &inst.config, false).map_err(err)?;
        if bits(&a.x()) != bits(&b.x()) {
            return Err(format!("{}: two sequential runs differ", inst.problem.name));
        }
        let c = solve(spec, &inst.problem.data, &par(&inst), false).map_err(err)?;
        let g = common::rel_linf(&c.x(), &a.x());
        graph_gap = graph_gap.max(g);
        if !(g <= 1e-6) {
            return Err(format!("{}: parallel graph run differs by {g:e}", inst.problem.name));
        }
    }

    let dir = tempfile::tempdir().map_err(err)?;
    gallery::write_assets(dir.path()).map_err(err)?;
    let mut checked = 0;
    for name in ["arap_warp16", "arap_mesh42", "poisson64", "robust_mesh42"] {
        let m = dir.path().join(name).join("manifest.toml");
        let reference = run_cli(&m, "1", &["--seq"])?;
        for threads in ["2", "8"] {
            if run_cli(&m, threads, &["--seq"])? != reference {
                return Err(format!("{name}: sequential output changes with MINOPT_THREADS={threads}"));
            }
            checked += 1;
        }
        if name == "poisson64" || name == "arap_warp16" {
            for threads in ["1", "8"] {
                if run_cli(&m, threads, &["--par"])? != reference {
                    return Err(format!("{name}: parallel grid output with {threads} threads differs from sequential"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!(
        "{} grid and 3 graph problems; {checked} subprocess runs bitwise equal across thread counts; parallel graph gap {graph_gap:.1e}",
        grids.len()
    ))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "derivative oracle", derivative_oracle),
        (2, "matrix-free equals dense J", matrix_free_vs_dense),
        (3, "linear-problem exactness", poisson_exactness),
        (4, "mode equivalence", mode_equivalence),
        (5, "LM contract", lm_contract),
        (6, "NIST suite", nist_suite),
        (7, "simplifier and scheduler semantics", simplifier_semantics),
        (8, "boundary default", boundary_default),
        (9, "determinism", determinism),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, name, f) in criteria {
        if !only.is_empty() && !only.contains(&k) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {k}. {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {k}. {name} ({secs:.1} s): {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
