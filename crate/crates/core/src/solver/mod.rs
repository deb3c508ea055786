//! Gauss-Newton and Levenberg-Marquardt with a preconditioned conjugate gradient
//! inner solve, in matrix-free, materialized and hybrid forms.

mod config;
mod lm;
mod pcg;
mod plan;
mod solve;
mod sparse;

pub use config::{Materialize, Method, SolveConfig};
pub use lm::TrustRegion;
pub use pcg::{dot, pcg, PcgBuffers, PcgOutcome, PcgSettings};
pub use plan::{plan, CompiledPlan, ComputedKernel, CostKernel, ExcludeKernel, JKernel, Kernel, KernelSite, Targets, VectorKernel};
pub use solve::{trace_csv, Callback, SolveResult, Termination, TraceRow, TRACE_HEADER};
pub use sparse::SparseCsr;
