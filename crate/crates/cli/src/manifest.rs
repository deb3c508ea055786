//! Run manifests: which problem to solve, with what data, and where results go.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use minopt::solver::{Materialize, Method, SolveConfig};
use minopt::Precision;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BindValue {
    Param(f64),
    /// A `.optd` array or `.optg` graph.
    File(PathBuf),
}

/// Solver settings a manifest may override; absent keys keep their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub method: Option<String>,
    pub precision: Option<String>,
    pub materialize: Option<String>,
    pub nl_iters: Option<usize>,
    pub lin_iters: Option<usize>,
    pub pcg_rtol: Option<f64>,
    pub pcg_atol: Option<f64>,
    pub precond: Option<bool>,
    pub parallel: Option<bool>,
    pub initial_radius: Option<f64>,
    pub cost_stop_tol: Option<f64>,
}

impl ConfigOverrides {
    /// Defaults for the selected precision, then every set field.
    pub fn apply(&self, base: Option<SolveConfig>) -> CliResult<SolveConfig> {
        let precision = match &self.precision {
            Some(p) => p.parse::<Precision>().map_err(CliError::usage)?,
            None => base.as_ref().map_or(Precision::F64, |c| c.precision),
        };
        let mut cfg = match base {
            Some(c) if c.precision == precision => c,
            Some(c) => SolveConfig { precision, pcg_rel_tol: SolveConfig::default_rel_tol(precision), ..c },
            None => SolveConfig::for_precision(precision),
        };
        if let Some(m) = &self.method {
            cfg.method = m.parse::<Method>().map_err(CliError::usage)?;
        }
        if let Some(m) = &self.materialize {
            cfg.materialize = m.parse::<Materialize>().map_err(CliError::usage)?;
        }
        if let Some(v) = self.nl_iters {
            cfg.nonlinear_iters = v;
        }
        if let Some(v) = self.lin_iters {
            cfg.linear_iters = v;
        }
        if let Some(v) = self.pcg_rtol {
            cfg.pcg_rel_tol = v;
        }
        if let Some(v) = self.pcg_atol {
            cfg.pcg_abs_tol = v;
        }
        if let Some(v) = self.precond {
            cfg.use_preconditioner = v;
        }
        if let Some(v) = self.parallel {
            cfg.parallel = v;
        }
        if let Some(v) = self.initial_radius {
            cfg.initial_radius = v;
        }
        if let Some(v) = self.cost_stop_tol {
            cfg.cost_stop_tol = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// `self` with every field set in `other` replaced.
    pub fn merged(&self, other: &ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            method: other.method.clone().or_else(|| self.method.clone()),
            precision: other.precision.clone().or_else(|| self.precision.clone()),
            materialize: other.materialize.clone().or_else(|| self.materialize.clone()),
            nl_iters: other.nl_iters.or(self.nl_iters),
            lin_iters: other.lin_iters.or(self.lin_iters),
            pcg_rtol: other.pcg_rtol.or(self.pcg_rtol),
            pcg_atol: other.pcg_atol.or(self.pcg_atol),
            precond: other.precond.or(self.precond),
            parallel: other.parallel.or(self.parallel),
            initial_radius: other.initial_radius.or(self.initial_radius),
            cost_stop_tol: other.cost_stop_tol.or(self.cost_stop_tol),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// Each unknown is written here as `<name>.optd`.
    pub dir: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub problem: PathBuf,
    /// Dimension extents; dimensions not listed are taken from the data, then the problem file.
    #[serde(default)]
    pub dims: BTreeMap<String, usize>,
    #[serde(default)]
    pub bind: BTreeMap<String, BindValue>,
    #[serde(default)]
    pub config: ConfigOverrides,
    #[serde(default)]
    pub output: Outputs,
}

impl RunManifest {
    /// Reads a manifest; relative paths inside it are resolved against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read manifest {}: {e}", path.display())))?;
        let mut m: RunManifest =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("manifest {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut m.problem);
        for v in m.bind.values_mut() {
            if let BindValue::File(p) = v {
                fix(p);
            }
        }
        if let Some(d) = m.output.dir.as_mut() {
            fix(d);
        }
        if let Some(t) = m.output.trace.as_mut() {
            fix(t);
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}
