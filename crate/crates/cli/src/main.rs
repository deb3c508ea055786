use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use minopt_cli::bind::load_data;
use minopt_cli::compare::compare;
use minopt_cli::gallery;
use minopt_cli::manifest::{ConfigOverrides, RunManifest};
use minopt_cli::nist::{all_variants, cmd_nist, Variant};
use minopt_cli::run::{cmd_solve, solve, Problem};
use minopt_cli::{CliError, CliResult};
use minopt::solver::Method;
use minopt::Precision;

#[derive(Parser)]
#[command(name = "minopt", version, about = "Compile and solve sum-of-squares energies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the problem described by a manifest.
    Solve {
        manifest: PathBuf,
        #[command(flatten)]
        flags: SolverFlags,
        /// Write the per-iteration trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the NIST regression suite over a directory of `.dat` files.
    Nist {
        dir: PathBuf,
        /// Summary table path; printed to stdout when absent.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Directory for one trace CSV per run.
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Only f64 Levenberg-Marquardt from the first start.
        #[arg(long)]
        quick: bool,
    },
    /// Compare the operator modes on one problem.
    Compare {
        /// Manifest of the problem; or use --gallery.
        manifest: Option<PathBuf>,
        /// A packaged instance instead of a manifest.
        #[arg(long, conflicts_with = "manifest")]
        gallery: Option<String>,
        /// The same problem written with cache arrays.
        #[arg(long)]
        hybrid: Option<PathBuf>,
        /// The same problem in another encoding, e.g. explicit edges for a grid.
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[command(flatten)]
        flags: SolverFlags,
    },
    /// Solve every packaged instance and print its final cost.
    Gallery,
    /// Write the packaged instances as problem files, data and manifests.
    GenAssets { dir: PathBuf },
}

#[derive(Args, Default)]
struct SolverFlags {
    /// gn or lm
    #[arg(long)]
    method: Option<String>,
    /// f32 or f64
    #[arg(long)]
    precision: Option<String>,
    /// none, j or jtj
    #[arg(long)]
    materialize: Option<String>,
    #[arg(long = "nl-iters")]
    nl_iters: Option<usize>,
    #[arg(long = "lin-iters")]
    lin_iters: Option<usize>,
    #[arg(long = "pcg-rtol")]
    pcg_rtol: Option<f64>,
    #[arg(long = "no-precond")]
    no_precond: bool,
    #[arg(long, conflicts_with = "par")]
    seq: bool,
    #[arg(long)]
    par: bool,
}

impl SolverFlags {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            method: self.method.clone(),
            precision: self.precision.clone(),
            materialize: self.materialize.clone(),
            nl_iters: self.nl_iters,
            lin_iters: self.lin_iters,
            pcg_rtol: self.pcg_rtol,
            precond: self.no_precond.then_some(false),
            parallel: if self.par {
                Some(true)
            } else if self.seq {
                Some(false)
            } else {
                None
            },
            ..ConfigOverrides::default()
        }
    }
}

fn manifest_problem(path: &Path) -> CliResult<(Problem, ConfigOverrides)> {
    let m = RunManifest::load(path)?;
    let source = std::fs::read_to_string(&m.problem)
        .map_err(|e| CliError::usage(format!("cannot read problem {}: {e}", m.problem.display())))?;
    let data = load_data(&m.bind)?;
    let name = m.problem.file_stem().map_or_else(String::new, |s| s.to_string_lossy().to_string());
    Ok((Problem { name, source, dims: m.dims, data }, m.config))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Solve { manifest, flags, trace } => {
            let report = cmd_solve(&manifest, &flags.overrides(), trace.as_deref())?;
            println!("{report}");
        }
        Cmd::Nist { dir, summary, traces, quick } => {
            let variants = if quick {
                vec![Variant { method: Method::LevenbergMarquardt, precision: Precision::F64, start: 1 }]
            } else {
                all_variants()
            };
            let report = cmd_nist(&dir, &variants, traces.as_deref())?;
            match summary {
                Some(p) => write(&p, &report.summary_csv())?,
                None => print!("{}", report.summary_csv()),
            }
            for (what, why) in &report.skipped {
                eprintln!("skipped {what}: {why}");
            }
        }
        Cmd::Compare { manifest, gallery: name, hybrid, against, reps, flags } => {
            let (problem, config, hybrid) = match (manifest, name) {
                (Some(m), _) => {
                    let (p, c) = manifest_problem(&m)?;
                    let h = hybrid.as_deref().map(manifest_problem).transpose()?.map(|(p, _)| p);
                    (p, c.merged(&flags.overrides()).apply(None)?, h)
                }
                (None, Some(n)) => {
                    let inst = gallery::find(&n).ok_or_else(|| CliError::usage(format!("no packaged instance `{n}`")))?;
                    let h = inst.cached_variant.as_deref().and_then(gallery::find).map(|i| i.problem);
                    let cfg = ConfigOverrides::default().merged(&flags.overrides()).apply(Some(inst.config))?;
                    (inst.problem, cfg, h)
                }
                (None, None) => return Err(CliError::usage("compare needs a manifest or --gallery")),
            };
            let against = against.as_deref().map(manifest_problem).transpose()?.map(|(p, _)| p);
            let report = compare(&problem, &config, hybrid.as_ref(), against.as_ref(), reps)?;
            println!("{report}");
        }
        Cmd::Gallery => {
            println!("instance,method,iterations,initial_cost,final_cost,termination");
            for inst in gallery::packaged() {
                let r = solve(inst.problem.spec()?, &inst.problem.data, &inst.config, false)?.result;
                println!(
                    "{},{},{},{:e},{:e},{}",
                    inst.problem.name,
                    inst.config.method.name(),
                    r.trace.len() - 1,
                    r.initial_cost,
                    r.final_cost,
                    r.termination.describe()
                );
            }
        }
        Cmd::GenAssets { dir } => {
            for m in gallery::write_assets(&dir)? {
                println!("wrote {}", m.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
