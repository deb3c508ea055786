//! Scheduling of conditioned IR into guarded register programs, and their execution.

mod exec;
mod program;
mod schedule;
mod state;

pub use exec::{exec_grid, exec_grid_strict, exec_graph, pool, ExecMode, ExecReport, SharedMut, CHUNK};
pub use program::{Block, Instr, KernelProgram, Op, Reg};
pub use schedule::schedule;
pub use state::{flatten, neighbor, unflatten, ElementEnv, FieldLayout, GraphData, Inputs, Layout, Site, State};
