use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Source position, 1-based.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: Pos, msg: String },

    #[error("undeclared identifier `{name}` at {pos}")]
    UndeclaredIdentifier { name: String, pos: Pos },

    #[error("duplicate declaration of `{name}` at {pos}")]
    DuplicateDeclaration { name: String, pos: Pos },

    #[error("`{name}` at {pos} expects {expected} argument(s), got {got}")]
    ArityMismatch { name: String, expected: String, got: usize, pos: Pos },

    #[error("offset of `{name}` at {pos} is not a compile-time integer")]
    NonConstantOffset { name: String, pos: Pos },

    #[error("energy at {pos} mixes stencil offsets and graph slots")]
    MixedDomain { pos: Pos },

    #[error("exponent at {pos} is not a constant")]
    NonConstantExponent { pos: Pos },

    #[error("type error at {pos}: {msg}")]
    Type { pos: Pos, msg: String },

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("exclude predicate for `{0}` is not boolean-valued")]
    NonBooleanPredicate(String),

    #[error("computed array `{0}` depends on itself")]
    CyclicComputedArray(String),

    #[error("expression uses graph slots where a stencil expression is required")]
    GraphDomain,

    #[error("cycle in expression graph")]
    CyclicIr,

    #[error("environment lacks {0}")]
    DomainFault(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("edge {edge} references vertex {vertex}, domain has {extent}")]
    IndexOutOfRange { edge: usize, vertex: u64, extent: usize },

    #[error("binding error: {0}")]
    Bind(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path} is truncated")]
    TruncatedFile { path: PathBuf },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite cost {cost} at iteration {iter}")]
    NonFiniteCost { iter: usize, cost: f64 },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn syntax(pos: Pos, msg: impl Into<String>) -> Self {
        Error::Syntax { pos, msg: msg.into() }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
