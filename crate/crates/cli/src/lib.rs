//! Command-line driver: solve problems from manifests, run the packaged
//! gallery, the NIST regression suite and operator-mode comparisons.

pub mod bind;
pub mod compare;
pub mod error;
pub mod gallery;
pub mod manifest;
pub mod nist;
pub mod run;

pub use error::{CliError, CliResult};
