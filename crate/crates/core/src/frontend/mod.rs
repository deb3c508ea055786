//! Energy language: parsing, lowering to scalar IR, validation.

pub mod ast;
mod lexer;
mod lower;
mod parser;
mod problem;
mod validate;

pub use ast::{Ast, ComputedMode};
pub use lower::{lower, lower_with_dims};
pub use parser::parse;
pub use problem::*;
pub use validate::validate;

use crate::error::Result;

/// Parses, lowers and validates `src`, applying dimension overrides.
pub fn compile_source(src: &str, dims: &[(String, usize)]) -> Result<ProblemSpec> {
    let ast = parse(src)?;
    let spec = lower_with_dims(&ast, dims)?;
    validate(&spec)?;
    Ok(spec)
}
