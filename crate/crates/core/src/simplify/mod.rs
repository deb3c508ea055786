//! Polynomial canonicalization, Horner factoring and condition assignment.

pub mod canon;
pub mod conditions;
pub mod horner;

pub use canon::canonicalize;
pub use conditions::{eval_conditioned, guard_literals, lower_conditions, ConditionedIr, ConditionedOutput, Reduction};
pub use horner::factor_horner;
